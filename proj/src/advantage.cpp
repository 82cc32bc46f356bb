#include "mbl/advantage.hpp"

#include "mbl/error.hpp"
#include "mbl/numeric.hpp"

#include <algorithm>

namespace mbl {

namespace {

void check_assignments(std::span<const int> assignments, std::size_t n) {
  if (assignments.size() != n) {
    throw Error("assignment vector has length " + std::to_string(assignments.size()) +
                ", expected " + std::to_string(n));
  }
  for (int a : assignments) {
    if (a != 0 && a != 1) throw Error("assignments must be 0 or 1");
  }
}

double mean_of(const std::vector<double>& terms) {
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

Eigen::VectorXd row(const ObservationalDataset& data, std::size_t i) {
  return data.x().row(static_cast<Eigen::Index>(i)).transpose();
}

// (1/M) sum_{j in J(i)} (mu(X_i, 1 - W_i) - mu(X_j, 1 - W_i)), for mu given as
// per-unit predictions of each arm.
double matching_discrepancy(const ObservationalDataset& data, const MatchResult& matches,
                            std::size_t i, const Eigen::VectorXd& mu0, const Eigen::VectorXd& mu1) {
  const Eigen::VectorXd& mu = data.w()[i] == 1 ? mu0 : mu1;
  double sum = 0.0;
  for (auto j : matches.matches_of(i)) {
    sum += mu[static_cast<Eigen::Index>(i)] - mu[static_cast<Eigen::Index>(j)];
  }
  return sum / static_cast<double>(matches.m());
}

}  // namespace

double advantage_estimate(const ImputedPotentialOutcomes& imputed, std::span<const int> assignments) {
  const auto n = static_cast<std::size_t>(imputed.gamma.size());
  check_assignments(assignments, n);
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    terms[i] = (2 * assignments[i] - 1) * imputed.gamma[static_cast<Eigen::Index>(i)];
  }
  return mean_of(terms);
}

double advantage_linear_form(const ObservationalDataset& data, const MatchResult& matches,
                             std::span<const int> assignments) {
  check_assignments(assignments, data.n());
  if (matches.n() != data.n()) throw Error("match result does not belong to this dataset");
  const auto k = k_pi_counts(matches, assignments);
  const double m = static_cast<double>(matches.m());
  std::vector<double> terms(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double weight = (2 * assignments[i] - 1) + k[i] / m;
    terms[i] = (2 * data.w()[i] - 1) * weight * data.y()[static_cast<Eigen::Index>(i)];
  }
  return mean_of(terms);
}

AdvantageDecomposition decompose_advantage(const ObservationalDataset& data,
                                           const MatchResult& matches,
                                           std::span<const int> assignments,
                                           const MeanFunction& true_mu) {
  check_assignments(assignments, data.n());
  if (matches.n() != data.n()) throw Error("match result does not belong to this dataset");
  const auto n = data.n();
  Eigen::VectorXd mu0(static_cast<Eigen::Index>(n)), mu1(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = row(data, i);
    mu0[static_cast<Eigen::Index>(i)] = true_mu(xi, 0);
    mu1[static_cast<Eigen::Index>(i)] = true_mu(xi, 1);
  }
  const auto k = k_pi_counts(matches, assignments);
  const double m = static_cast<double>(matches.m());

  std::vector<double> a_terms(n), e_terms(n), b_terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const int sign_pi = 2 * assignments[i] - 1;
    const int sign_w = 2 * data.w()[i] - 1;
    const double eps = data.y()[ii] - (data.w()[i] == 1 ? mu1[ii] : mu0[ii]);
    a_terms[i] = sign_pi * (mu1[ii] - mu0[ii]);
    e_terms[i] = sign_w * (sign_pi + k[i] / m) * eps;
    b_terms[i] = sign_w * sign_pi * matching_discrepancy(data, matches, i, mu0, mu1);
  }
  AdvantageDecomposition out;
  out.a_bar = mean_of(a_terms);
  out.e_m = mean_of(e_terms);
  out.b_m = mean_of(b_terms);
  out.total = out.a_bar + out.e_m + out.b_m;
  return out;
}

double estimate_conditional_bias(const ObservationalDataset& data, const MatchResult& matches,
                                 std::span<const int> assignments, const OutcomeModel& model) {
  check_assignments(assignments, data.n());
  if (matches.n() != data.n()) throw Error("match result does not belong to this dataset");
  if (model.p() != data.p()) throw Error("outcome model dimension does not match the data");
  const Eigen::VectorXd mu0 = model.predict_rows(data.x(), 0);
  const Eigen::VectorXd mu1 = model.predict_rows(data.x(), 1);
  std::vector<double> terms(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    terms[i] = (2 * data.w()[i] - 1) * (2 * assignments[i] - 1) *
               matching_discrepancy(data, matches, i, mu0, mu1);
  }
  return mean_of(terms);
}

AipwScores aipw_scores(const ObservationalDataset& data, std::span<const double> e_hat,
                       const MeanFunction& mu_hat, double clip) {
  const auto n = static_cast<Eigen::Index>(data.n());
  Eigen::VectorXd mu0(n), mu1(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = data.x().row(i).transpose();
    mu0[i] = mu_hat(xi, 0);
    mu1[i] = mu_hat(xi, 1);
  }
  return aipw_scores(data, e_hat, mu0, mu1, clip);
}

AipwScores aipw_scores(const ObservationalDataset& data, std::span<const double> e_hat,
                       const Eigen::VectorXd& mu0, const Eigen::VectorXd& mu1, double clip) {
  if (e_hat.size() != data.n()) throw Error("propensity vector length does not match the data");
  if (static_cast<std::size_t>(mu0.size()) != data.n() ||
      static_cast<std::size_t>(mu1.size()) != data.n()) {
    throw Error("outcome prediction length does not match the data");
  }
  if (!(clip >= 0.0 && clip < 0.5)) throw Error("propensity clip must lie in [0, 0.5)");
  AipwScores out;
  out.gamma.resize(static_cast<Eigen::Index>(data.n()));
  for (std::size_t i = 0; i < data.n(); ++i) {
    double e = e_hat[i];
    if (!(e >= 0.0 && e <= 1.0)) {
      throw Error("propensity " + std::to_string(e) + " of unit " + std::to_string(i) +
                  " is outside [0, 1]");
    }
    if (e < clip || e > 1.0 - clip) {
      e = std::clamp(e, clip, 1.0 - clip);
      ++out.clipped;
    }
    const auto ii = static_cast<Eigen::Index>(i);
    const int w = data.w()[i];
    const double residual = data.y()[ii] - (w == 1 ? mu1[ii] : mu0[ii]);
    out.gamma[ii] = mu1[ii] - mu0[ii] + (w - e) / (e * (1.0 - e)) * residual;
  }
  return out;
}

}  // namespace mbl
