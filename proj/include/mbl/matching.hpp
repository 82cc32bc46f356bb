#pragma once

#include "mbl/dataset.hpp"
#include "mbl/metric.hpp"
#include "mbl/outcome_models.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace mbl {

/// Policy assignments pi(X_i) in {0, 1}, one per unit.
using Assignments = std::vector<int>;

/// Nearest opposite-arm neighbours of every unit, with replacement.
///
/// Invariants: each unit has exactly m matches, all from the other arm, sorted
/// by (distance, index); k_counts[i] is the number of matched sets containing i,
/// so the counts sum to n * m.
class MatchResult {
 public:
  MatchResult(std::size_t m, std::vector<std::size_t> matched, std::vector<double> distances);

  std::size_t m() const { return m_; }
  std::size_t n() const { return k_counts_.size(); }

  std::span<const std::size_t> matches_of(std::size_t i) const {
    return {matched_.data() + i * m_, m_};
  }
  std::span<const double> distances_of(std::size_t i) const {
    return {distances_.data() + i * m_, m_};
  }
  const std::vector<int>& k_counts() const { return k_counts_; }

 private:
  std::size_t m_;
  std::vector<std::size_t> matched_;
  std::vector<double> distances_;
  std::vector<int> k_counts_;
};

/// Exact brute-force search for the m nearest opposite-arm units of every unit
/// under `metric`; ties go to the smaller index. `threads` only affects speed.
MatchResult match_units(const ObservationalDataset& data, const MahalanobisMetric& metric,
                        std::size_t m, unsigned threads = 1);

/// "unit,rank,matched_index,distance" rows (0-based indices, rank from 1).
void write_csv(std::ostream& out, const MatchResult& matches);

enum class ImputationVariant { raw, bias_corrected };

/// Imputed potential-outcome pairs; gamma = y1 - y0. The entry for the
/// observed arm is Y_i verbatim.
struct ImputedPotentialOutcomes {
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
  Eigen::VectorXd gamma;
  ImputationVariant variant = ImputationVariant::raw;
};

/// Counterfactual = mean outcome of the matched units.
ImputedPotentialOutcomes impute_raw(const ObservationalDataset& data, const MatchResult& matches);

/// Counterfactual = mean over matches of Y_j + mu(X_i, 1 - W_i) - mu(X_j, 1 - W_i).
ImputedPotentialOutcomes impute_bias_corrected(const ObservationalDataset& data,
                                               const MatchResult& matches,
                                               const OutcomeModel& model);

/// K_M(pi, i) = sum over units j whose matched set contains i of (2 pi_j - 1).
std::vector<int> k_pi_counts(const MatchResult& matches, std::span<const int> assignments);

}  // namespace mbl
