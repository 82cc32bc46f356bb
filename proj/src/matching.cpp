#include "mbl/matching.hpp"

#include "mbl/error.hpp"
#include "mbl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <utility>

namespace mbl {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_matches(const ObservationalDataset& data, const MatchResult& matches) {
  if (matches.n() != data.n()) {
    throw Error("match result covers " + std::to_string(matches.n()) + " units, data has " +
                std::to_string(data.n()));
  }
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (auto j : matches.matches_of(i)) {
      if (j >= data.n()) throw Error("matched index out of range (stale match result?)");
    }
  }
}

}  // namespace

MatchResult::MatchResult(std::size_t m, std::vector<std::size_t> matched,
                         std::vector<double> distances)
    : m_(m), matched_(std::move(matched)), distances_(std::move(distances)) {
  if (m_ == 0) throw Error("number of matches must be positive");
  if (matched_.size() % m_ != 0 || distances_.size() != matched_.size()) {
    throw Error("match result arrays have inconsistent sizes");
  }
  const std::size_t n = matched_.size() / m_;
  k_counts_.assign(n, 0);
  for (auto j : matched_) {
    if (j >= n) throw Error("matched index out of range");
    ++k_counts_[j];
  }
}

MatchResult match_units(const ObservationalDataset& data, const MahalanobisMetric& metric,
                        std::size_t m, unsigned threads) {
  if (m == 0) throw Error("number of matches must be positive");
  if (static_cast<std::size_t>(metric.dim()) != data.p()) {
    throw Error("metric dimension " + std::to_string(metric.dim()) + " does not match " +
                std::to_string(data.p()) + " covariates");
  }
  std::vector<std::size_t> arm[2];
  for (std::size_t i = 0; i < data.n(); ++i) arm[data.w()[i]].push_back(i);
  for (int w = 0; w < 2; ++w) {
    if (arm[w].size() < m) {
      throw Error("arm " + std::to_string(w) + " has " + std::to_string(arm[w].size()) +
                  " units, fewer than the " + std::to_string(m) + " matches requested");
    }
  }

  // Distances are formed from the covariate difference, ||(x_j - x_i) L||^2
  // with V = L L', so units at equal offsets tie exactly and the smaller
  // index wins as documented.
  const RowMatrix x = data.x();
  const Eigen::MatrixXd factor = metric.factor();
  const auto p = static_cast<std::size_t>(x.cols());
  const std::size_t n = data.n();
  std::vector<std::size_t> matched(n * m);
  std::vector<double> distances(n * m);

  parallel_for(n, threads, [&](std::size_t i) {
    const auto& pool = arm[1 - data.w()[i]];
    std::vector<std::pair<double, std::size_t>> cand(pool.size());
    std::vector<double> diff(p);
    const double* xi = x.data() + i * p;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      const double* xj = x.data() + pool[k] * p;
      for (std::size_t c = 0; c < p; ++c) diff[c] = xj[c] - xi[c];
      double sq = 0.0;
      for (std::size_t c = 0; c < p; ++c) {
        double t = 0.0;
        for (std::size_t r = c; r < p; ++r) {
          t += diff[r] * factor(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        }
        sq += t * t;
      }
      cand[k] = {sq, pool[k]};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(m), cand.end());
    for (std::size_t r = 0; r < m; ++r) {
      matched[i * m + r] = cand[r].second;
      distances[i * m + r] = std::sqrt(cand[r].first);
    }
  });
  return MatchResult(m, std::move(matched), std::move(distances));
}

void write_csv(std::ostream& out, const MatchResult& matches) {
  out << "unit,rank,matched_index,distance\n";
  for (std::size_t i = 0; i < matches.n(); ++i) {
    const auto idx = matches.matches_of(i);
    const auto dist = matches.distances_of(i);
    for (std::size_t r = 0; r < matches.m(); ++r) {
      out << i << ',' << r + 1 << ',' << idx[r] << ',' << std::setprecision(17) << dist[r] << '\n';
    }
  }
}

ImputedPotentialOutcomes impute_raw(const ObservationalDataset& data, const MatchResult& matches) {
  check_matches(data, matches);
  const auto n = static_cast<Eigen::Index>(data.n());
  const double inv_m = 1.0 / static_cast<double>(matches.m());
  ImputedPotentialOutcomes out;
  out.y0.resize(n);
  out.y1.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0.0;
    for (auto j : matches.matches_of(static_cast<std::size_t>(i))) {
      sum += data.y()[static_cast<Eigen::Index>(j)];
    }
    const double counterfactual = sum * inv_m;
    if (data.w()[static_cast<std::size_t>(i)] == 1) {
      out.y1[i] = data.y()[i];
      out.y0[i] = counterfactual;
    } else {
      out.y0[i] = data.y()[i];
      out.y1[i] = counterfactual;
    }
  }
  out.gamma = out.y1 - out.y0;
  out.variant = ImputationVariant::raw;
  return out;
}

ImputedPotentialOutcomes impute_bias_corrected(const ObservationalDataset& data,
                                               const MatchResult& matches,
                                               const OutcomeModel& model) {
  check_matches(data, matches);
  if (model.p() != data.p()) throw Error("outcome model dimension does not match the data");
  const auto n = static_cast<Eigen::Index>(data.n());
  const double inv_m = 1.0 / static_cast<double>(matches.m());
  const Eigen::VectorXd mu0 = model.predict_rows(data.x(), 0);
  const Eigen::VectorXd mu1 = model.predict_rows(data.x(), 1);
  ImputedPotentialOutcomes out;
  out.y0.resize(n);
  out.y1.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int wi = data.w()[static_cast<std::size_t>(i)];
    const Eigen::VectorXd& mu = wi == 1 ? mu0 : mu1;  // arm being imputed
    double sum = 0.0;
    for (auto js : matches.matches_of(static_cast<std::size_t>(i))) {
      const auto j = static_cast<Eigen::Index>(js);
      sum += data.y()[j] + mu[i] - mu[j];
    }
    const double counterfactual = sum * inv_m;
    if (wi == 1) {
      out.y1[i] = data.y()[i];
      out.y0[i] = counterfactual;
    } else {
      out.y0[i] = data.y()[i];
      out.y1[i] = counterfactual;
    }
  }
  out.gamma = out.y1 - out.y0;
  out.variant = ImputationVariant::bias_corrected;
  return out;
}

std::vector<int> k_pi_counts(const MatchResult& matches, std::span<const int> assignments) {
  if (assignments.size() != matches.n()) {
    throw Error("assignment vector has length " + std::to_string(assignments.size()) +
                ", expected " + std::to_string(matches.n()));
  }
  std::vector<int> k(matches.n(), 0);
  for (std::size_t j = 0; j < matches.n(); ++j) {
    if (assignments[j] != 0 && assignments[j] != 1) throw Error("assignments must be 0 or 1");
    const int sign = 2 * assignments[j] - 1;
    for (auto i : matches.matches_of(j)) k[i] += sign;
  }
  return k;
}

}  // namespace mbl
