#pragma once

#include "mbl/policytree.hpp"

#include <random>
#include <vector>

namespace testing {

// Depth-1 or depth-2 tree with random features, N(0,1) thresholds and random actions.
inline mbl::TreePolicy random_tree(std::mt19937_64& gen, std::size_t p, std::size_t depth) {
  std::normal_distribution<double> normal;
  const std::size_t internal = depth == 1 ? 1 : 3;
  std::vector<mbl::Split> splits;
  for (std::size_t k = 0; k < internal; ++k) splits.push_back({gen() % p, normal(gen)});
  std::vector<int> actions;
  for (std::size_t k = 0; k <= internal; ++k) actions.push_back(static_cast<int>(gen() % 2));
  std::vector<std::size_t> eligible(p);
  for (std::size_t j = 0; j < p; ++j) eligible[j] = j;
  return mbl::TreePolicy(depth, splits, actions, eligible);
}

}  // namespace testing
