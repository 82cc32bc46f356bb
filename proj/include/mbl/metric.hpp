#pragma once

#include <Eigen/Dense>

namespace mbl {

/// Mahalanobis norm ||a - b|| = sqrt((a - b)' V (a - b)).
class MahalanobisMetric {
 public:
  /// Wraps an explicit symmetric positive-definite weight matrix.
  explicit MahalanobisMetric(Eigen::MatrixXd v, double ridge = 0.0);

  const Eigen::MatrixXd& v() const { return v_; }
  double ridge() const { return ridge_; }
  Eigen::Index dim() const { return v_.rows(); }

  double distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                  const Eigen::Ref<const Eigen::VectorXd>& b) const;

  /// Rows mapped to coordinates where the metric is Euclidean: ||z_a - z_b||_2
  /// equals distance(a, b) up to rounding.
  Eigen::MatrixXd whiten(const Eigen::MatrixXd& x) const;

  /// Lower Cholesky factor L of v (v = L L').
  const Eigen::MatrixXd& factor() const { return factor_; }

 private:
  Eigen::MatrixXd v_;
  Eigen::MatrixXd factor_;  // lower Cholesky factor of v_
  double ridge_;
};

/// Inverse of the pooled sample covariance ((n - 1) denominator). A singular
/// covariance is regularized with ridge = 1e-10 * trace / p, grown by 10x until
/// the matrix is invertible; giving up past 1e-2 * trace / p.
MahalanobisMetric fit_mahalanobis(const Eigen::MatrixXd& x);

}  // namespace mbl
