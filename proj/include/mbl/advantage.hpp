#pragma once

#include "mbl/dataset.hpp"
#include "mbl/matching.hpp"
#include "mbl/outcome_models.hpp"

#include <Eigen/Dense>

#include <functional>
#include <span>

namespace mbl {

/// Conditional mean of the outcome, mu(x, w).
using MeanFunction = std::function<double(const Eigen::VectorXd& x, int w)>;

/// (1/n) sum_i (2 pi_i - 1) gamma_i. With raw imputations this is the matching
/// estimator of the advantage; with bias-corrected ones, its corrected version.
double advantage_estimate(const ImputedPotentialOutcomes& imputed, std::span<const int> assignments);

/// The raw matching advantage written as a weighted sum of observed outcomes:
/// (1/n) sum_i (2 W_i - 1) [(2 pi_i - 1) + K_M(pi, i) / M] Y_i.
double advantage_linear_form(const ObservationalDataset& data, const MatchResult& matches,
                             std::span<const int> assignments);

/// Split of the raw matching advantage into the oracle advantage on the sample
/// (a_bar), the noise term (e_m) and the matching bias (b_m). Needs the true mu,
/// so only usable on simulated data. total = a_bar + e_m + b_m.
struct AdvantageDecomposition {
  double a_bar = 0.0;
  double e_m = 0.0;
  double b_m = 0.0;
  double total = 0.0;
};

AdvantageDecomposition decompose_advantage(const ObservationalDataset& data,
                                           const MatchResult& matches,
                                           std::span<const int> assignments,
                                           const MeanFunction& true_mu);

/// Estimated matching bias with a fitted outcome model in place of mu. The
/// bias-corrected advantage equals the raw one minus this value.
double estimate_conditional_bias(const ObservationalDataset& data, const MatchResult& matches,
                                 std::span<const int> assignments, const OutcomeModel& model);

struct AipwScores {
  Eigen::VectorXd gamma;
  /// Number of propensities moved into [clip, 1 - clip].
  std::size_t clipped = 0;
};

/// Doubly robust scores
///   mu(X_i,1) - mu(X_i,0) + (W_i - e_i) / (e_i (1 - e_i)) (Y_i - mu(X_i,W_i)),
/// with e_i clipped to [clip, 1 - clip]. Propensities outside [0, 1] are an error.
AipwScores aipw_scores(const ObservationalDataset& data, std::span<const double> e_hat,
                       const MeanFunction& mu_hat, double clip = 0.01);

/// Same scores from per-unit predictions mu0_i = mu(X_i, 0), mu1_i = mu(X_i, 1),
/// e.g. cross-fitted ones.
AipwScores aipw_scores(const ObservationalDataset& data, std::span<const double> e_hat,
                       const Eigen::VectorXd& mu0, const Eigen::VectorXd& mu1, double clip = 0.01);

}  // namespace mbl
