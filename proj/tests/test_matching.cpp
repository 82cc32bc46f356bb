#include "mbl/error.hpp"
#include "mbl/matching.hpp"
#include "mbl/metric.hpp"
#include "mbl/outcome_models.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <numeric>
#include <random>
#include <sstream>

using mbl::ObservationalDataset;

namespace {

ObservationalDataset four_units() {
  Eigen::MatrixXd x(4, 1);
  x << 0, 1, 2, 3;
  return ObservationalDataset(x, {1, 0, 1, 0}, Eigen::Vector4d(5, 3, 4, 1));
}

std::vector<std::size_t> as_vector(std::span<const std::size_t> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("matching: four-unit hand example, m = 1") {
  const auto data = four_units();
  const auto res = mbl::match_units(data, mbl::fit_mahalanobis(data.x()), 1);
  // 0-based: J(0)={1}, J(1)={0}, J(2)={1}, J(3)={2}
  CHECK(as_vector(res.matches_of(0)) == std::vector<std::size_t>{1});
  CHECK(as_vector(res.matches_of(1)) == std::vector<std::size_t>{0});
  CHECK(as_vector(res.matches_of(2)) == std::vector<std::size_t>{1});
  CHECK(as_vector(res.matches_of(3)) == std::vector<std::size_t>{2});
  CHECK(res.k_counts() == std::vector<int>{1, 2, 1, 0});
}

TEST_CASE("matching: m equal to the arm size takes the whole opposite arm") {
  const auto data = four_units();
  const auto res = mbl::match_units(data, mbl::fit_mahalanobis(data.x()), 2);
  for (std::size_t i = 0; i < 4; ++i) {
    auto got = as_vector(res.matches_of(i));
    std::sort(got.begin(), got.end());
    CHECK(got == (i % 2 == 0 ? std::vector<std::size_t>{1, 3} : std::vector<std::size_t>{0, 2}));
  }
  CHECK(res.k_counts() == std::vector<int>{2, 2, 2, 2});
  CHECK_THROWS_AS(mbl::match_units(data, mbl::fit_mahalanobis(data.x()), 3), mbl::Error);
  CHECK_THROWS_AS(mbl::match_units(data, mbl::fit_mahalanobis(data.x()), 0), mbl::Error);
}

TEST_CASE("matching: equidistant candidates are ranked by index") {
  // Unit 0 at the origin; controls 1..4 all at distance 1 in some direction.
  // Two far-away treated units keep the treated arm large enough.
  Eigen::MatrixXd x(7, 2);
  x << 0, 0, 0, 1, 1, 0, 0, -1, -1, 0, 9, 9, -9, 9;
  const ObservationalDataset data(x, {1, 0, 0, 0, 0, 1, 1}, Eigen::VectorXd::Zero(7));
  const auto res = mbl::match_units(data, mbl::MahalanobisMetric{Eigen::Matrix2d::Identity()}, 3);
  CHECK(as_vector(res.matches_of(0)) == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("matching: binary covariates tie exactly and keep index order") {
  // Many units share offsets; every tie must resolve to the smaller index.
  std::mt19937_64 gen(13);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index n = 24;
    Eigen::MatrixXd x(n, 3);
    std::vector<int> w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      w[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
      for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = static_cast<double>(gen() % 2) * (j + 1) * 0.3;
    }
    x(0, 0) = 0.7;  // avoid a constant column
    const ObservationalDataset data(x, w, Eigen::VectorXd::Zero(n));
    const auto metric = mbl::fit_mahalanobis(x);
    const auto res = mbl::match_units(data, metric, 4);
    const auto expected = oracle::matches(x, w, metric.v(), 4);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
      // The oracle's quadratic form can split exact ties by rounding, so compare
      // by distance first and by index among equal distances.
      const auto got = as_vector(res.matches_of(i));
      for (std::size_t r = 0; r < 4; ++r) {
        const double dg = oracle::quad_distance(metric.v(), x.row(static_cast<Eigen::Index>(i)).transpose(),
                                                x.row(static_cast<Eigen::Index>(got[r])).transpose());
        const double de = oracle::quad_distance(metric.v(), x.row(static_cast<Eigen::Index>(i)).transpose(),
                                                x.row(static_cast<Eigen::Index>(expected[i][r])).transpose());
        CHECK(dg == doctest::Approx(de).epsilon(1e-10));
        if (r > 0) {
          const auto prev = res.distances_of(i)[r - 1];
          CHECK((res.distances_of(i)[r] > prev || got[r] > got[r - 1]));
        }
      }
    }
  }
}

TEST_CASE("matching agrees with the full-sort oracle on 200 random datasets") {
  std::mt19937_64 gen(17);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 6 + static_cast<std::size_t>(gen() % 25);  // 6..30
    const std::size_t p = 1 + static_cast<std::size_t>(gen() % 4);
    const std::size_t m = std::vector<std::size_t>{1, 2, 3}[gen() % 3];
    const auto inst = oracle::random_instance(gen, n, p, m);
    const ObservationalDataset data(inst.x, inst.w, inst.y);
    const auto metric = mbl::fit_mahalanobis(inst.x);
    const auto v = oracle::inverse_covariance(inst.x);
    const auto res = mbl::match_units(data, metric, m, 1 + rep % 3);
    const auto expected = oracle::matches(inst.x, inst.w, v, m);
    int total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(as_vector(res.matches_of(i)) == expected[i]);
      for (auto j : res.matches_of(i)) CHECK(inst.w[j] == 1 - inst.w[i]);
      total += res.k_counts()[i];
    }
    CHECK(total == static_cast<int>(n * m));
    std::vector<int> count(n, 0);
    for (const auto& set : expected) {
      for (auto j : set) ++count[j];
    }
    CHECK(res.k_counts() == count);
  }
}

TEST_CASE("matching with replacement: dropping a unit leaves other matched sets alone") {
  std::mt19937_64 gen(19);
  for (int rep = 0; rep < 30; ++rep) {
    const auto inst = oracle::random_instance(gen, 20, 2, 4);
    const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(2, 2);
    const mbl::MahalanobisMetric metric(v);
    const ObservationalDataset data(inst.x, inst.w, inst.y);
    const auto full = mbl::match_units(data, metric, 2);
    const std::size_t drop = gen() % 20;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < 20; ++i) {
      if (i != drop) keep.push_back(i);
    }
    const auto reduced_data = data.subset(keep);
    if (reduced_data.arm_size(0) < 2 || reduced_data.arm_size(1) < 2) continue;
    const auto reduced = mbl::match_units(reduced_data, metric, 2);
    for (std::size_t r = 0; r < keep.size(); ++r) {
      const auto set = full.matches_of(keep[r]);
      if (std::find(set.begin(), set.end(), drop) != set.end()) continue;
      std::vector<std::size_t> mapped;
      for (auto j : reduced.matches_of(r)) mapped.push_back(keep[j]);
      CHECK(mapped == as_vector(set));
    }
  }
}

TEST_CASE("matching output is identical for any thread count") {
  std::mt19937_64 gen(23);
  const auto inst = oracle::random_instance(gen, 300, 3, 10);
  const ObservationalDataset data(inst.x, inst.w, inst.y);
  const auto metric = mbl::fit_mahalanobis(inst.x);
  const auto a = mbl::match_units(data, metric, 5, 1);
  const auto b = mbl::match_units(data, metric, 5, 4);
  for (std::size_t i = 0; i < data.n(); ++i) {
    CHECK(as_vector(a.matches_of(i)) == as_vector(b.matches_of(i)));
  }
  std::ostringstream sa, sb;
  mbl::write_csv(sa, a);
  mbl::write_csv(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("unit,rank,matched_index,distance\n", 0) == 0);
}

TEST_CASE("impute_raw: hand examples") {
  SUBCASE("treated unit with one match") {
    Eigen::MatrixXd x(2, 1);
    x << 0, 1;
    const ObservationalDataset data(x, {1, 0}, Eigen::Vector2d(5, 3));
    const auto res = mbl::match_units(data, mbl::fit_mahalanobis(x), 1);
    const auto imp = mbl::impute_raw(data, res);
    CHECK(imp.y0[0] == 3);
    CHECK(imp.y1[0] == 5);
    CHECK(imp.gamma[0] == 2);
    CHECK(imp.variant == mbl::ImputationVariant::raw);
  }
  SUBCASE("two matches average their outcomes") {
    Eigen::MatrixXd x(3, 1);
    x << 0, 1, -1;
    const ObservationalDataset data(x, {1, 0, 0}, Eigen::Vector3d(10, 1, 3));
    const auto res = mbl::match_units(data, mbl::fit_mahalanobis(x), 1);
    const mbl::MatchResult two(2, {1, 2, 0, 0, 0, 0}, {1, 1, 1, 1, 1, 1});
    const auto imp = mbl::impute_raw(data, two);
    CHECK(imp.y0[0] == 2);
    (void)res;
  }
  SUBCASE("constant outcomes give zero scores") {
    std::mt19937_64 gen(29);
    auto inst = oracle::random_instance(gen, 20, 2, 3);
    inst.y.setConstant(4.25);
    const ObservationalDataset data(inst.x, inst.w, inst.y);
    const auto imp = mbl::impute_raw(data, mbl::match_units(data, mbl::fit_mahalanobis(inst.x), 3));
    CHECK(imp.gamma.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("imputation keeps the observed outcome and gamma = y1 - y0") {
  std::mt19937_64 gen(31);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = oracle::random_instance(gen, 40, 3, 5);
    const ObservationalDataset data(inst.x, inst.w, inst.y);
    const auto res = mbl::match_units(data, mbl::fit_mahalanobis(inst.x), 5);
    const auto model = mbl::fit_ols_per_arm(data);
    for (const auto& imp : {mbl::impute_raw(data, res), mbl::impute_bias_corrected(data, res, model)}) {
      for (Eigen::Index i = 0; i < 40; ++i) {
        const double observed = inst.w[static_cast<std::size_t>(i)] == 1 ? imp.y1[i] : imp.y0[i];
        CHECK(observed == inst.y[i]);
        CHECK(imp.gamma[i] == imp.y1[i] - imp.y0[i]);
      }
    }
    // A zero model leaves the raw imputation unchanged.
    const auto zero = mbl::OutcomeModel::zero(mbl::Expansion::linear, 3);
    CHECK(mbl::impute_bias_corrected(data, res, zero).gamma == mbl::impute_raw(data, res).gamma);
  }
}

TEST_CASE("impute_bias_corrected adds the model discrepancy to each match") {
  Eigen::MatrixXd x(3, 1);
  x << 0, 1, 3;
  const ObservationalDataset data(x, {1, 0, 0}, Eigen::Vector3d(10, 2, 6));
  const mbl::MatchResult matches(1, {1, 0, 0}, {1, 1, 3});
  // mu(x, w) = 1 + 2x in both arms.
  mbl::ArmFit arm{Eigen::Vector2d(1, 2), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), 0.0};
  const mbl::OutcomeModel model(mbl::Expansion::linear, 1, arm, arm);
  const auto imp = mbl::impute_bias_corrected(data, matches, model);
  CHECK(imp.y0[0] == doctest::Approx(2 + (1 + 0) - (1 + 2)));
  CHECK(imp.y1[1] == doctest::Approx(10 + (1 + 2) - 1));
  CHECK(imp.y1[2] == doctest::Approx(10 + (1 + 6) - 1));
  CHECK(imp.variant == mbl::ImputationVariant::bias_corrected);
}

TEST_CASE("k_pi_counts: treat-all, treat-none and the hand example") {
  const auto data = four_units();
  const auto res = mbl::match_units(data, mbl::fit_mahalanobis(data.x()), 1);
  const std::vector<int> ones(4, 1), zeros(4, 0), pi{1, 0, 1, 0};
  CHECK(mbl::k_pi_counts(res, ones) == res.k_counts());
  CHECK(mbl::k_pi_counts(res, zeros) == std::vector<int>{-1, -2, -1, 0});
  CHECK(mbl::k_pi_counts(res, pi) == std::vector<int>{-1, 2, -1, 0});
  CHECK_THROWS_AS(mbl::k_pi_counts(res, std::vector<int>{1, 0, 2, 0}), mbl::Error);
  CHECK_THROWS_AS(mbl::k_pi_counts(res, std::vector<int>{1, 0}), mbl::Error);
}

TEST_CASE("match results validate their arrays") {
  CHECK_THROWS_AS(mbl::MatchResult(0, {}, {}), mbl::Error);
  CHECK_THROWS_AS(mbl::MatchResult(2, {0, 1, 1}, {0, 0, 0}), mbl::Error);
  CHECK_THROWS_AS(mbl::MatchResult(1, {0, 5}, {0, 0}), mbl::Error);
  const auto data = four_units();
  const mbl::MatchResult small(1, {1, 0}, {1, 1});
  CHECK_THROWS_AS(mbl::impute_raw(data, small), mbl::Error);
}
