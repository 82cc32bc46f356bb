#include "mbl/error.hpp"
#include "mbl/learner.hpp"
#include "mbl/simulation.hpp"

#include <doctest.h>

#include <random>

using mbl::ObservationalDataset;

namespace {

ObservationalDataset four_units() {
  Eigen::MatrixXd x(4, 1);
  x << 0, 1, 2, 3;
  return ObservationalDataset(x, {1, 0, 1, 0}, Eigen::Vector4d(1, 3, 4, 1));
}

}  // namespace

TEST_CASE("method names map to matching settings") {
  const auto a = mbl::config_for_method("MB-LASSO-M5");
  CHECK(a.m == 5);
  CHECK(a.correction == mbl::Correction::lasso);
  CHECK(a.depth == 2);
  CHECK(mbl::config_for_method("mb-m1").correction == mbl::Correction::none);
  CHECK(mbl::config_for_method("mb-m1").m == 1);
  CHECK(mbl::config_for_method("mb-lr-m5").correction == mbl::Correction::ols);
  CHECK_THROWS_AS(mbl::config_for_method("mb-m3"), mbl::Error);
  CHECK(mbl::parse_correction("lr") == mbl::Correction::ols);
  CHECK_THROWS_AS(mbl::parse_correction("ridge"), mbl::Error);
}

TEST_CASE("learn_policy on the four-unit example equals search on hand scores") {
  // m = 1 matches: 0->1, 1->0, 2->1, 3->2, so gamma = (1-3, 1-3, 4-3, 4-1) = (-2, -2, 1, 3).
  const auto data = four_units();
  mbl::LearnerConfig config;
  config.m = 1;
  config.correction = mbl::Correction::none;
  config.depth = 1;
  const auto result = mbl::learn_policy_detailed(data, config);
  CHECK(result.imputed.gamma == Eigen::Vector4d(-2, -2, 1, 3));
  const auto expected = mbl::search_tree(data.x(), Eigen::Vector4d(-2, -2, 1, 3), 1, {0});
  CHECK(result.policy == expected);
  CHECK(result.policy.splits()[0].threshold == 1.5);
  CHECK(result.policy.actions() == std::vector<int>{0, 1});
  CHECK(result.advantage == doctest::Approx((2 + 2 + 1 + 3) / 4.0));
  CHECK_FALSE(result.model.has_value());
}

TEST_CASE("learn_policy recovers a noiseless depth-2 region from exact twins") {
  std::mt19937_64 gen(301);
  std::normal_distribution<double> normal;
  const Eigen::Index half = 60;
  Eigen::MatrixXd x(2 * half, 3);
  std::vector<int> w(static_cast<std::size_t>(2 * half));
  Eigen::VectorXd y(2 * half);
  auto region = [](double a, double b) { return a > 0.2 && b > -0.3 ? 1.0 : -1.0; };
  for (Eigen::Index i = 0; i < half; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = x(i + half, j) = normal(gen);
    w[static_cast<std::size_t>(i)] = 1;
    w[static_cast<std::size_t>(i + half)] = 0;
    y[i] = region(x(i, 0), x(i, 1));
    y[i + half] = 0.0;
  }
  const ObservationalDataset data(x, w, y);
  for (auto correction : {mbl::Correction::none, mbl::Correction::ols}) {
    mbl::LearnerConfig config;
    config.m = 1;
    config.correction = correction;
    const auto policy = mbl::learn_policy(data, config);
    const auto a = mbl::evaluate_policy(policy, x);
    for (Eigen::Index i = 0; i < 2 * half; ++i) {
      CHECK(a[static_cast<std::size_t>(i)] == (region(x(i, 0), x(i, 1)) > 0 ? 1 : 0));
    }
  }
}

TEST_CASE("learn_policy respects eligibility and is reproducible") {
  mbl::SimulationSpec spec;
  spec.n = 300;
  spec.seed = 17;
  const auto sim = mbl::generate(spec);
  const auto data = sim.data.exclude_from_policy({"x1"});
  auto config = mbl::config_for_method("mb-lasso-m5");
  config.seed = 3;
  const auto a = mbl::learn_policy_detailed(data, config);
  for (const auto& s : a.policy.splits()) CHECK(s.feature != 0);
  CHECK(a.model.has_value());
  config.threads = 3;
  const auto b = mbl::learn_policy_detailed(data, config);
  CHECK(a.policy == b.policy);
  CHECK(a.imputed.gamma == b.imputed.gamma);
  config.eligible_features = std::vector<std::size_t>{3};
  const auto restricted = mbl::learn_policy(data, config);
  for (const auto& s : restricted.splits()) CHECK(s.feature == 3);
}

TEST_CASE("learn_policy labels the failing stage") {
  const auto data = four_units();
  mbl::LearnerConfig config;
  config.m = 3;
  config.correction = mbl::Correction::none;
  try {
    mbl::learn_policy(data, config);
    FAIL("expected a stage error");
  } catch (const mbl::StageError& e) {
    CHECK(e.stage() == "match");
  }
  config.m = 1;
  config.correction = mbl::Correction::ols;  // arms of 2 are too small for OLS
  try {
    mbl::learn_policy(data, config);
    FAIL("expected a stage error");
  } catch (const mbl::StageError& e) {
    CHECK(e.stage() == "outcome_model");
  }
  Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(4, 1);
  const ObservationalDataset flat(constant, {1, 0, 1, 0}, Eigen::Vector4d(1, 2, 3, 4));
  config.correction = mbl::Correction::none;
  try {
    mbl::learn_policy(flat, config);
    FAIL("expected a stage error");
  } catch (const mbl::StageError& e) {
    CHECK(e.stage() == "metric");
  }
}
