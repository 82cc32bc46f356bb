#pragma once

#include "mbl/dataset.hpp"
#include "mbl/lasso.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mbl {

/// Feature map applied before regression (the intercept is added separately).
///   linear:    x_1..x_p
///   quadratic: x_1..x_p, x_1^2..x_p^2, x_j x_k for j < k (row-major order)
enum class Expansion { linear, quadratic };

std::string_view to_string(Expansion e);
Expansion parse_expansion(std::string_view text);

std::size_t expanded_dim(Expansion e, std::size_t p);
Eigen::MatrixXd expand(Expansion e, const Eigen::MatrixXd& x);

/// One arm's regression: intercept-first coefficients on the original scale,
/// plus the standardization the fit used (center 0 / scale 1 for OLS).
struct ArmFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  double lambda = 0.0;
};

/// Per-arm outcome regression mu_hat(x, w).
class OutcomeModel {
 public:
  OutcomeModel(Expansion expansion, std::size_t p, ArmFit arm0, ArmFit arm1);

  /// All-zero coefficients: predicts 0 everywhere.
  static OutcomeModel zero(Expansion expansion, std::size_t p);

  Expansion expansion() const { return expansion_; }
  std::size_t p() const { return p_; }
  const ArmFit& arm(int w) const { return arms_.at(static_cast<std::size_t>(w)); }

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x, int w) const;
  Eigen::VectorXd predict_rows(const Eigen::MatrixXd& x, int w) const;

  /// Self-describing text form; parse() inverts it exactly.
  std::string serialize() const;
  static OutcomeModel parse(std::string_view text);

 private:
  Expansion expansion_;
  std::size_t p_;
  std::array<ArmFit, 2> arms_;
};

/// Least squares within each arm on (1, expand(x)). Rank-deficient designs get
/// the minimum-norm solution. Each arm needs at least p + 2 units.
OutcomeModel fit_ols_per_arm(const ObservationalDataset& data,
                             Expansion expansion = Expansion::linear);

struct LassoSettings {
  /// Explicit strictly descending grid shared by both arms. When unset each arm
  /// gets geometric_grid(lambda_max, grid_size, min_ratio).
  std::optional<std::vector<double>> lambda_grid;
  std::size_t grid_size = 100;
  double min_ratio = 1e-4;
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  Expansion expansion = Expansion::quadratic;
  LassoOptions solver;
};

/// Result of cross-validating one arm along a grid.
struct LassoPath {
  std::vector<double> lambdas;
  std::vector<double> cv_mse;
  std::size_t selected = 0;
};

/// Cross-validated Lasso per arm: k-fold CV (seeded shuffle) along the
/// warm-started grid, pick the lambda with minimum pooled CV error, refit on
/// the whole arm.
OutcomeModel fit_lasso_per_arm(const ObservationalDataset& data, const LassoSettings& settings,
                               std::array<LassoPath, 2>* paths = nullptr);

}  // namespace mbl
