#include "mbl/metric.hpp"

#include "mbl/error.hpp"

#include <cmath>
#include <string>

namespace mbl {

namespace {

// Reciprocal condition estimate below which a covariance counts as singular.
constexpr double kSingularRcond = 1e-12;

}  // namespace

MahalanobisMetric::MahalanobisMetric(Eigen::MatrixXd v, double ridge)
    : v_(std::move(v)), ridge_(ridge) {
  if (v_.rows() != v_.cols() || v_.rows() == 0) throw Error("metric matrix must be square");
  if (!v_.isApprox(v_.transpose(), 1e-12)) throw Error("metric matrix must be symmetric");
  v_ = 0.5 * (v_ + v_.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(v_);
  if (llt.info() != Eigen::Success) throw Error("metric matrix must be positive definite");
  factor_ = llt.matrixL();
}

double MahalanobisMetric::distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                                   const Eigen::Ref<const Eigen::VectorXd>& b) const {
  if (a.size() != dim() || b.size() != dim()) {
    throw Error("distance: vectors of dimension " + std::to_string(a.size()) + " and " +
                std::to_string(b.size()) + " for a metric of dimension " +
                std::to_string(dim()));
  }
  const Eigen::VectorXd d = a - b;
  return std::sqrt(std::max(0.0, d.dot(v_ * d)));
}

Eigen::MatrixXd MahalanobisMetric::whiten(const Eigen::MatrixXd& x) const {
  if (x.cols() != dim()) throw Error("whiten: dimension mismatch");
  return x * factor_;
}

MahalanobisMetric fit_mahalanobis(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw Error("Mahalanobis metric needs at least 2 rows");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  const auto p = cov.rows();
  const double scale = cov.trace() / static_cast<double>(p);
  if (!(scale > 0.0)) throw Error("Mahalanobis metric: all covariates are constant");

  auto try_invert = [&](double ridge, Eigen::MatrixXd& out) {
    Eigen::MatrixXd reg = cov;
    reg.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success || llt.rcond() < kSingularRcond) return false;
    out = llt.solve(Eigen::MatrixXd::Identity(p, p));
    return true;
  };

  Eigen::MatrixXd v;
  if (try_invert(0.0, v)) return MahalanobisMetric(0.5 * (v + v.transpose()), 0.0);
  for (double factor = 1e-10; factor <= 1e-2 * (1 + 1e-9); factor *= 10.0) {
    const double ridge = factor * scale;
    if (try_invert(ridge, v)) return MahalanobisMetric(0.5 * (v + v.transpose()), ridge);
  }
  throw Error("Mahalanobis metric: covariance not invertible even with ridge 1e-2 * trace / p");
}

}  // namespace mbl
