#include "mbl/lasso.hpp"

#include "mbl/error.hpp"

#include <cmath>

namespace mbl {

LassoProblem::LassoProblem(const Eigen::MatrixXd& features, const Eigen::VectorXd& y) {
  const auto n = features.rows();
  const auto d = features.cols();
  if (n < 1 || y.size() != n) throw Error("lasso: design and response sizes differ");
  const double nd = static_cast<double>(n);
  center_ = features.colwise().mean().transpose();
  scale_.resize(d);
  constant_.assign(static_cast<std::size_t>(d), false);
  z_ = features.rowwise() - center_.transpose();
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sd = std::sqrt(z_.col(j).squaredNorm() / nd);
    // Columns that are constant up to rounding carry no signal.
    if (!(sd > 1e-12 * std::max(1.0, std::abs(center_[j])))) {
      constant_[static_cast<std::size_t>(j)] = true;
      scale_[j] = 1.0;
      z_.col(j).setZero();
    } else {
      scale_[j] = sd;
      z_.col(j) /= sd;
    }
  }
  y_mean_ = y.mean();
  yc_ = y.array() - y_mean_;
  y_sd_ = std::sqrt(yc_.squaredNorm() / nd);
  gram_ = z_.transpose() * z_ / nd;
  zty_ = z_.transpose() * yc_ / nd;
}

double LassoProblem::lambda_max() const {
  if (z_.cols() == 0) return 0.0;
  return (z_.transpose() * yc_).cwiseAbs().maxCoeff() / static_cast<double>(n());
}

double LassoProblem::objective(double lambda, const Eigen::VectorXd& beta) const {
  const Eigen::VectorXd r = yc_ - z_ * beta;
  return r.squaredNorm() / (2.0 * static_cast<double>(n())) + lambda * beta.lpNorm<1>();
}

std::size_t LassoProblem::solve(double lambda, Eigen::VectorXd& beta, const LassoOptions& options,
                                std::vector<double>* trace) const {
  const auto d = z_.cols();
  if (beta.size() != d) beta = Eigen::VectorXd::Zero(d);
  if (lambda < 0.0) throw Error("lasso: negative penalty");
  // Columns have unit variance, so delta^2 is the objective-scale change of a
  // coordinate update; compare it with tolerance * var(y).
  const double tol = options.tolerance * (y_sd_ > 0.0 ? y_sd_ * y_sd_ : 1.0);
  // Covariance updates: grad = z'(y - z beta) / n is kept current, so a
  // coordinate step costs O(d) instead of O(n).
  Eigen::VectorXd grad = zty_ - gram_ * beta;

  auto update = [&](Eigen::Index j) {
    if (constant_[static_cast<std::size_t>(j)]) return 0.0;
    const double next = soft_threshold(grad[j] + beta[j], lambda);
    const double delta = next - beta[j];
    if (delta != 0.0) {
      grad.noalias() -= delta * gram_.col(j);
      beta[j] = next;
    }
    return delta * delta;
  };

  std::vector<Eigen::Index> active;
  std::size_t cycles = 0;
  while (cycles < options.max_cycles) {
    // Full sweep over every coordinate.
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) max_change = std::max(max_change, update(j));
    ++cycles;
    if (trace) trace->push_back(objective(lambda, beta));
    if (max_change < tol) break;

    // Sweep the nonzero coordinates until they settle, then re-check all.
    active.clear();
    for (Eigen::Index j = 0; j < d; ++j) {
      if (beta[j] != 0.0) active.push_back(j);
    }
    while (cycles < options.max_cycles) {
      double change = 0.0;
      for (auto j : active) change = std::max(change, update(j));
      ++cycles;
      if (trace) trace->push_back(objective(lambda, beta));
      if (change < tol) break;
    }
  }
  return cycles;
}

Eigen::VectorXd LassoProblem::to_original(const Eigen::VectorXd& beta) const {
  Eigen::VectorXd out(beta.size() + 1);
  double intercept = y_mean_;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double b = beta[j] / scale_[j];
    out[j + 1] = b;
    intercept -= b * center_[j];
  }
  out[0] = intercept;
  return out;
}

std::vector<double> geometric_grid(double lambda_max, std::size_t count, double ratio) {
  if (count == 0) throw Error("lambda grid size must be positive");
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error("lambda grid ratio must lie in (0, 1)");
  std::vector<double> grid(count);
  if (count == 1) {
    grid[0] = lambda_max;
    return grid;
  }
  const double step = std::log(ratio) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) {
    grid[k] = lambda_max * std::exp(step * static_cast<double>(k));
  }
  return grid;
}

}  // namespace mbl
