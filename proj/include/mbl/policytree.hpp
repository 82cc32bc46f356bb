#pragma once

#include "mbl/matching.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mbl {

/// Axis-aligned split: go left iff x[feature] <= threshold. Thresholds may be
/// +-infinity (everything left / everything right).
struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;

  friend bool operator==(const Split&, const Split&) = default;
};

/// Fixed-depth binary decision tree mapping covariates to an action in {0, 1}.
///
/// Stored as a complete tree in heap order: internal node k has children
/// 2k + 1 and 2k + 2; there are 2^depth - 1 splits and 2^depth leaf actions,
/// left to right.
class TreePolicy {
 public:
  TreePolicy(std::size_t depth, std::vector<Split> splits, std::vector<int> actions,
             std::vector<std::size_t> eligible_features);

  /// Depth-1 tree that ignores x and always returns `action`.
  static TreePolicy constant(int action, std::size_t feature = 0);

  std::size_t depth() const { return depth_; }
  const std::vector<Split>& splits() const { return splits_; }
  const std::vector<int>& actions() const { return actions_; }
  const std::vector<std::size_t>& eligible_features() const { return eligible_; }

  int act(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

  friend bool operator==(const TreePolicy&, const TreePolicy&) = default;

 private:
  std::size_t depth_;
  std::vector<Split> splits_;
  std::vector<int> actions_;
  std::vector<std::size_t> eligible_;
};

/// Action of every row of x.
Assignments evaluate_policy(const TreePolicy& tree, const Eigen::MatrixXd& x);

/// sum_i (2 pi(X_i) - 1) gamma_i.
double policy_objective(std::span<const int> assignments, const Eigen::VectorXd& gamma);

/// Exact search for the depth-1 or depth-2 tree maximizing
/// sum_i (2 pi(X_i) - 1) gamma_i.
///
/// Candidate thresholds at a node are -inf, the midpoints between consecutive
/// distinct values of the feature among the rows reaching that node, and +inf.
/// Leaves take action 1 iff their gamma sum is positive. Among trees with equal
/// objective the first in scan order wins: root feature ascending, then root
/// threshold ascending, then each child searched the same way.
TreePolicy search_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma, std::size_t depth,
                       std::vector<std::size_t> eligible_features);

/// Nested text form, e.g.
///
///   mbl-tree 1
///   depth 2
///   features age,educ,re75
///   eligible 0 2
///   split 0 age <= 27.5
///     leaf 0
///     leaf 1
///   ...
std::string to_text(const TreePolicy& tree, const std::vector<std::string>& feature_names);

/// JSON form with the same content.
std::string to_json(const TreePolicy& tree, const std::vector<std::string>& feature_names);

struct ParsedTree {
  TreePolicy tree;
  std::vector<std::string> feature_names;
};

ParsedTree parse_text(std::string_view text);
ParsedTree parse_json(std::string_view text);

}  // namespace mbl
