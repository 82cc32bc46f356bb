#pragma once

#include "mbl/advantage.hpp"
#include "mbl/dataset.hpp"
#include "mbl/outcome_models.hpp"
#include "mbl/policytree.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mbl {

/// Ridge linear-probability model for Pr(W = 1 | x), predictions clipped to
/// [clip, 1 - clip]. Covariates are standardized; the intercept is unpenalized.
class PropensityModel {
 public:
  static PropensityModel fit(const ObservationalDataset& data, double ridge_per_unit = 1e-3,
                             double clip = 0.01);

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  std::vector<double> predict_rows(const Eigen::MatrixXd& x) const;

 private:
  Eigen::VectorXd center_;
  Eigen::VectorXd scale_;
  Eigen::VectorXd coef_;  // intercept first, standardized scale
  double clip_ = 0.01;
};

/// AIPW estimate of the value of a policy:
///   mean_i [ Y_i I_i / e~_i - (I_i - e~_i) / e~_i * mu(X_i, pi_i) ],
/// with I_i = I{W_i = pi_i} and e~_i = Pr(W = pi_i | X_i) clipped to
/// [clip, 1 - clip]. `e_hat` holds Pr(W = 1 | X_i).
double aipw_value_estimate(const ObservationalDataset& data, std::span<const int> assignments,
                           std::span<const double> e_hat, const MeanFunction& mu_hat,
                           double clip = 0.01);

double aipw_value_estimate(const ObservationalDataset& data, std::span<const int> assignments,
                           const std::function<double(const Eigen::VectorXd&)>& e_hat,
                           const MeanFunction& mu_hat, double clip = 0.01);

enum class PropensityMethod { arm_proportion, linear_probability };

std::string_view to_string(PropensityMethod m);
PropensityMethod parse_propensity_method(std::string_view text);

/// Plug-in nuisances for value estimation: Pr(W = 1 | X_i) per unit and the
/// quadratic-expansion per-arm OLS outcome model.
struct EvaluationNuisances {
  std::vector<double> e_hat;
  OutcomeModel mu;
};

EvaluationNuisances fit_evaluation_nuisances(const ObservationalDataset& data,
                                             PropensityMethod propensity);

/// Splits a permutation of 0..n-1 into `folds` contiguous blocks; the first
/// n % folds blocks get one extra unit.
std::vector<std::vector<std::size_t>> fold_partition(std::span<const std::size_t> permutation,
                                                     std::size_t folds);

/// Learns a policy from a training subset; the seed is fold-specific.
using PolicyLearner =
    std::function<TreePolicy(const ObservationalDataset& train, std::uint64_t seed)>;

struct CrossValConfig {
  std::size_t folds = 5;
  std::size_t repeats = 100;
  std::uint64_t seed = 0;
  PropensityMethod propensity = PropensityMethod::arm_proportion;
  unsigned threads = 1;
};

struct CrossValReport {
  /// Fold-averaged AIPW value of every repeat (NaN if every fold failed).
  std::vector<double> repeat_values;
  std::vector<bool> flagged;
  std::vector<std::string> failures;
  double mean = 0.0;
  double std = 0.0;
  std::size_t folds = 0;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
};

/// Repeated k-fold cross-validation of a policy learner. Each repeat shuffles
/// the units, learns on k - 1 folds and scores the held-out fold with the AIPW
/// value estimate (nuisances fitted once on the full data). mean and std
/// (repeats - 1 denominator) are over repeats with at least one scored fold.
CrossValReport cross_validate(const ObservationalDataset& data, const PolicyLearner& learner,
                              const CrossValConfig& config);

void write_csv(std::ostream& out, const CrossValReport& report);
void write_repeats_csv(std::ostream& out, const CrossValReport& report);

struct AipwLearnerConfig {
  std::size_t depth = 2;
  std::size_t cross_fit_folds = 5;
  double clip = 0.01;
  std::uint64_t seed = 0;
};

/// Baseline: doubly robust scores with cross-fitted nuisances (quadratic OLS
/// per arm, ridge linear-probability propensity) fed to the exact tree search.
TreePolicy learn_aipw_policy(const ObservationalDataset& data, const AipwLearnerConfig& config);

}  // namespace mbl
