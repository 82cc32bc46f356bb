#pragma once

#include "mbl/dataset.hpp"
#include "mbl/matching.hpp"
#include "mbl/metric.hpp"
#include "mbl/outcome_models.hpp"
#include "mbl/policytree.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mbl {

/// Outcome model used to bias-correct the matched counterfactuals.
enum class Correction { none, ols, lasso };

std::string_view to_string(Correction c);
Correction parse_correction(std::string_view text);

struct LearnerConfig {
  std::size_t m = 5;
  Correction correction = Correction::lasso;
  std::size_t depth = 2;
  /// Features the tree may split on; defaults to the dataset's eligible set.
  std::optional<std::vector<std::size_t>> eligible_features;
  /// Used when correction == lasso. Its seed is overridden by `seed`, and its
  /// fold count is capped at the smaller arm size.
  LassoSettings lasso;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Named variants: "mb-m1", "mb-m5", "mb-lr-m1", "mb-lr-m5", "mb-lasso-m1",
/// "mb-lasso-m5" (case-insensitive).
LearnerConfig config_for_method(std::string_view method);

/// Everything the pipeline computed on the way to the policy.
struct LearnResult {
  TreePolicy policy;
  MahalanobisMetric metric;
  MatchResult matches;
  std::optional<OutcomeModel> model;
  ImputedPotentialOutcomes imputed;
  /// Advantage estimate of `policy` on the training data.
  double advantage = 0.0;
};

/// Matching-based policy learning: fit the metric, match, optionally fit the
/// outcome model, impute potential outcomes, and search the best tree on the
/// imputed differences. Failures are reported as StageError.
LearnResult learn_policy_detailed(const ObservationalDataset& data, const LearnerConfig& config);

TreePolicy learn_policy(const ObservationalDataset& data, const LearnerConfig& config);

}  // namespace mbl
