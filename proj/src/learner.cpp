#include "mbl/learner.hpp"

#include "mbl/advantage.hpp"
#include "mbl/error.hpp"

#include <algorithm>
#include <cctype>

namespace mbl {

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

std::string_view to_string(Correction c) {
  switch (c) {
    case Correction::none: return "none";
    case Correction::ols: return "ols";
    case Correction::lasso: return "lasso";
  }
  return "?";
}

Correction parse_correction(std::string_view text) {
  if (text == "none") return Correction::none;
  if (text == "ols" || text == "lr") return Correction::ols;
  if (text == "lasso") return Correction::lasso;
  throw Error("unknown correction '" + std::string(text) + "' (expected none, ols or lasso)");
}

LearnerConfig config_for_method(std::string_view method) {
  std::string name(method);
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  LearnerConfig config;
  if (name == "mb-m1" || name == "mb-m5") {
    config.correction = Correction::none;
  } else if (name == "mb-lr-m1" || name == "mb-lr-m5") {
    config.correction = Correction::ols;
  } else if (name == "mb-lasso-m1" || name == "mb-lasso-m5") {
    config.correction = Correction::lasso;
  } else {
    throw Error("unknown method '" + std::string(method) + "'");
  }
  config.m = name.back() == '1' ? 1 : 5;
  return config;
}

LearnResult learn_policy_detailed(const ObservationalDataset& data, const LearnerConfig& config) {
  const auto metric = stage("metric", [&] { return fit_mahalanobis(data.x()); });
  auto matches = stage("match", [&] { return match_units(data, metric, config.m, config.threads); });

  std::optional<OutcomeModel> model;
  if (config.correction == Correction::ols) {
    model = stage("outcome_model", [&] { return fit_ols_per_arm(data, Expansion::linear); });
  } else if (config.correction == Correction::lasso) {
    model = stage("outcome_model", [&] {
      LassoSettings lasso = config.lasso;
      lasso.seed = config.seed;
      // Small arms get leave-one-out style CV instead of failing.
      lasso.folds = std::min(lasso.folds, std::min(data.arm_size(0), data.arm_size(1)));
      return fit_lasso_per_arm(data, lasso);
    });
  }

  auto imputed = stage("impute", [&] {
    return model ? impute_bias_corrected(data, matches, *model) : impute_raw(data, matches);
  });

  auto policy = stage("search", [&] {
    auto features = config.eligible_features.value_or(data.eligible_features());
    return search_tree(data.x(), imputed.gamma, config.depth, std::move(features));
  });

  const auto assignments = evaluate_policy(policy, data.x());
  const double advantage = advantage_estimate(imputed, assignments);
  return LearnResult{std::move(policy), metric,           std::move(matches),
                     std::move(model),  std::move(imputed), advantage};
}

TreePolicy learn_policy(const ObservationalDataset& data, const LearnerConfig& config) {
  return learn_policy_detailed(data, config).policy;
}

}  // namespace mbl
