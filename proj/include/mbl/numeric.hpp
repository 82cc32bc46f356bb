#pragma once

#include <cstddef>
#include <span>

namespace mbl {

/// Pairwise (tree) summation. The split points depend only on the length, so
/// the result is reproducible bit for bit.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace mbl
