#include "mbl/dataset.hpp"
#include "mbl/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <fstream>
#include <random>
#include <sstream>

using mbl::CsvSchema;
using mbl::ObservationalDataset;

namespace {

ObservationalDataset parse(const std::string& text, CsvSchema schema = {"w", "y", {}}) {
  std::istringstream in(text);
  return mbl::load_csv(in, schema, "test.csv");
}

// Studentized mean difference computed straight from the definition.
double reference_nd(const Eigen::VectorXd& col, std::span<const int> w) {
  double s[2] = {0, 0}, ss[2] = {0, 0};
  double cnt[2] = {0, 0};
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    const int a = w[static_cast<std::size_t>(i)];
    s[a] += col[i];
    cnt[a] += 1;
  }
  const double m0 = s[0] / cnt[0], m1 = s[1] / cnt[1];
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    const int a = w[static_cast<std::size_t>(i)];
    const double d = col[i] - (a == 1 ? m1 : m0);
    ss[a] += d * d;
  }
  return (m1 - m0) / std::sqrt((ss[1] / (cnt[1] - 1) + ss[0] / (cnt[0] - 1)) / 2.0);
}

}  // namespace

TEST_CASE("load_csv parses a 4-row file into two arms of two") {
  const auto data = parse("x,w,y\n0,1,1.5\n1,0,2\n2,1,3\n3,0,4\n");
  CHECK(data.n() == 4);
  CHECK(data.p() == 1);
  CHECK(data.arm_size(1) == 2);
  CHECK(data.arm_size(0) == 2);
  CHECK(data.feature_names() == std::vector<std::string>{"x"});
  CHECK(data.y()[0] == 1.5);
  CHECK(data.w()[1] == 0);
}

TEST_CASE("load_csv honours an explicit covariate list and order") {
  const auto data = parse("a,b,w,y\n1,10,1,0\n2,20,0,0\n", {"w", "y", {"b", "a"}});
  CHECK(data.feature_names() == std::vector<std::string>{"b", "a"});
  CHECK(data.x()(1, 0) == 20);
  CHECK(data.x()(1, 1) == 2);
}

TEST_CASE("load_csv accepts quotes, CRLF and a byte-order mark") {
  const auto data = parse("\xEF\xBB\xBF\"x\",\"w\",\"y\"\r\n\"1\",1,2\r\n3,0,4\r\n");
  CHECK(data.n() == 2);
  CHECK(data.x()(1, 0) == 3);
}

TEST_CASE("load_csv rejects a treatment value of 2 and names the line") {
  try {
    parse("x,w,y\n0,1,1\n1,2,1\n2,0,1\n");
    FAIL("expected an error");
  } catch (const mbl::Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("'2'") != std::string::npos);
  }
}

TEST_CASE("load_csv reports missing columns by name") {
  CHECK_THROWS_WITH_AS(parse("x,w,z\n0,1,1\n1,0,1\n"), doctest::Contains("outcome column 'y'"),
                       mbl::Error);
  CHECK_THROWS_WITH_AS(parse("x,w,y\n0,1,1\n1,0,1\n", {"w", "y", {"q"}}),
                       doctest::Contains("'q'"), mbl::Error);
}

TEST_CASE("load_csv rejects malformed rows") {
  CHECK_THROWS_AS(parse("x,w,y\n0,1\n1,0,1\n"), mbl::Error);
  CHECK_THROWS_WITH_AS(parse("x,w,y\nabc,1,1\n1,0,1\n"), doctest::Contains("'abc'"), mbl::Error);
  CHECK_THROWS_AS(parse("x,w,y\nnan,1,1\n1,0,1\n"), mbl::Error);
  CHECK_THROWS_AS(parse("x,w,y\n1,0.5,1\n1,0,1\n"), mbl::Error);
  CHECK_THROWS_AS(parse("x,w,y\n1,1,1\n"), mbl::Error);  // n < 2
  CHECK_THROWS_AS(parse(""), mbl::Error);
}

TEST_CASE("dataset construction checks its contract") {
  Eigen::MatrixXd x(2, 1);
  x << 0, 1;
  CHECK_THROWS_AS(ObservationalDataset(x, {0, 3}, Eigen::Vector2d(1, 1)), mbl::Error);
  CHECK_THROWS_AS(ObservationalDataset(x, {0, 1}, Eigen::Vector2d(1, INFINITY)), mbl::Error);
  CHECK_THROWS_AS(ObservationalDataset(x, {0, 1, 1}, Eigen::Vector2d(1, 1)), mbl::Error);
  const ObservationalDataset ok(x, {0, 1}, Eigen::Vector2d(1, 1));
  CHECK(ok.feature_names() == std::vector<std::string>{"x1"});
}

TEST_CASE("exclude_from_policy and subset keep the eligibility mask") {
  const auto data = parse("a,b,c,w,y\n1,2,3,1,0\n4,5,6,0,1\n7,8,9,1,2\n");
  const auto ex = data.exclude_from_policy({"b"});
  CHECK(ex.eligible_features() == std::vector<std::size_t>{0, 2});
  CHECK(data.eligible_features() == std::vector<std::size_t>{0, 1, 2});
  const std::vector<std::size_t> rows{2, 0};
  const auto sub = ex.subset(rows);
  CHECK(sub.n() == 2);
  CHECK(sub.x()(0, 0) == 7);
  CHECK(sub.y()[1] == 0);
  CHECK(sub.eligible_features() == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(data.exclude_from_policy({"nope"}), mbl::Error);
}

TEST_CASE("normalized differences on the DW sample match the published balance table") {
  std::ifstream probe(MBL_DATA_DIR "/nsw_dw.csv");
  if (!probe) {
    MESSAGE("data/nsw_dw.csv not present; skipping");
    return;
  }
  const auto data = mbl::load_csv(MBL_DATA_DIR "/nsw_dw.csv", {"treat", "re78", {}});
  CHECK(data.n() == 445);
  CHECK(data.arm_size(1) == 185);
  CHECK(data.arm_size(0) == 260);
  const auto report = mbl::normalized_differences(data);
  const double expected[] = {0.107, 0.141, 0.044, -0.175, 0.094, -0.304, -0.002, 0.084};
  REQUIRE(report.features.size() == 8);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(std::abs(report.normalized_difference[j] - expected[j]) <= 0.001);
  }
}

TEST_CASE("normalized differences: identical arms give zero, oracle agreement, invariances") {
  // Both arms hold the same rows.
  Eigen::MatrixXd x(6, 2);
  x << 1, 5, 2, 7, 4, 1, 1, 5, 2, 7, 4, 1;
  const ObservationalDataset same(x, {1, 1, 1, 0, 0, 0}, Eigen::VectorXd::Zero(6));
  for (double v : mbl::normalized_differences(same).normalized_difference) CHECK(v == 0.0);

  std::mt19937_64 gen(11);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index n = 12 + rep % 7;
    Eigen::MatrixXd xr(n, 3);
    std::vector<int> w(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      w[static_cast<std::size_t>(i)] = i % 3 == 0 ? 1 : 0;
      for (Eigen::Index j = 0; j < 3; ++j) xr(i, j) = normal(gen) + 0.5 * w[static_cast<std::size_t>(i)];
    }
    const ObservationalDataset d(xr, w, Eigen::VectorXd::Zero(n));
    const auto base = mbl::normalized_differences(d);
    for (Eigen::Index j = 0; j < 3; ++j) {
      CHECK(base.normalized_difference[static_cast<std::size_t>(j)] ==
            doctest::Approx(reference_nd(xr.col(j), w)).epsilon(1e-12));
    }
    // Row permutation.
    std::vector<std::size_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    const auto permuted = mbl::normalized_differences(d.subset(perm));
    // Positive rescaling of each column.
    Eigen::MatrixXd scaled = xr;
    scaled.col(0) *= 1e3;
    scaled.col(1) *= 0.25;
    scaled.col(2) *= 7.0;
    const auto rescaled =
        mbl::normalized_differences(ObservationalDataset(scaled, w, Eigen::VectorXd::Zero(n)));
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(permuted.normalized_difference[j] ==
            doctest::Approx(base.normalized_difference[j]).epsilon(1e-12));
      CHECK(rescaled.normalized_difference[j] ==
            doctest::Approx(base.normalized_difference[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("normalized differences reject degenerate inputs") {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  CHECK_THROWS_AS(mbl::normalized_differences(ObservationalDataset(x, {1, 0, 0}, Eigen::Vector3d::Zero())),
                  mbl::Error);
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(4, 1, 2.0);
  CHECK_THROWS_WITH_AS(
      mbl::normalized_differences(ObservationalDataset(c, {1, 1, 0, 0}, Eigen::Vector4d::Zero())),
      doctest::Contains("x1"), mbl::Error);
}

TEST_CASE("balance report csv") {
  Eigen::MatrixXd x(4, 1);
  x << 1, 2, 3, 5;
  const auto report =
      mbl::normalized_differences(ObservationalDataset(x, {1, 1, 0, 0}, Eigen::Vector4d::Zero()));
  std::ostringstream out;
  mbl::write_csv(out, report);
  CHECK(out.str().rfind("feature,", 0) == 0);
  CHECK(out.str().find("x1,") != std::string::npos);
}
