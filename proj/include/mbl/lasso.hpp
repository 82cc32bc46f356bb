#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace mbl {

struct LassoOptions {
  /// Stop once no coordinate update in a sweep has delta_j^2 above
  /// tolerance * var(y), delta_j being the change of the standardized
  /// coefficient (the same rule as glmnet's `thresh`).
  double tolerance = 1e-7;
  std::size_t max_cycles = 10000;
};

/// Gaussian Lasso on a fixed design,
///   (1 / 2n) ||y - b0 - F b||^2 + lambda ||b||_1,
/// solved by cyclic coordinate descent on columns standardized to mean 0 and
/// (population) variance 1. The intercept is never penalized. Constant columns
/// keep a zero coefficient.
class LassoProblem {
 public:
  LassoProblem(const Eigen::MatrixXd& features, const Eigen::VectorXd& y);

  std::size_t n() const { return static_cast<std::size_t>(z_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(z_.cols()); }

  /// Smallest lambda at which every coefficient is zero: max_j |z_j' y_c| / n.
  double lambda_max() const;

  /// Penalized objective at standardized coefficients `beta`.
  double objective(double lambda, const Eigen::VectorXd& beta) const;

  /// Minimizes in place starting from `beta` (warm start). Returns the number of
  /// sweeps. When `trace` is given, the objective after every sweep is appended.
  std::size_t solve(double lambda, Eigen::VectorXd& beta, const LassoOptions& options = {},
                    std::vector<double>* trace = nullptr) const;

  /// Intercept-first coefficients on the original feature scale.
  Eigen::VectorXd to_original(const Eigen::VectorXd& beta) const;

  const Eigen::VectorXd& center() const { return center_; }
  const Eigen::VectorXd& scale() const { return scale_; }

 private:
  Eigen::MatrixXd z_;
  Eigen::VectorXd yc_;
  Eigen::MatrixXd gram_;  // z'z / n
  Eigen::VectorXd zty_;   // z'y_c / n
  Eigen::VectorXd center_;
  Eigen::VectorXd scale_;
  std::vector<bool> constant_;
  double y_mean_ = 0.0;
  double y_sd_ = 0.0;
};

/// Coordinate-wise soft-thresholding operator S(z, t) = sign(z) max(|z| - t, 0).
inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Geometric grid of `count` values from lambda_max down to ratio * lambda_max.
std::vector<double> geometric_grid(double lambda_max, std::size_t count, double ratio);

}  // namespace mbl
