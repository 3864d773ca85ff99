#pragma once

#include <cstddef>
#include <span>

namespace bistoch::detail {

// Pairwise (tree) summation. The split points depend only on the length of
// the input, so the result is reproducible independent of who calls it.
inline double pairwise_sum(std::span<const double> xs) {
  constexpr std::size_t kLeaf = 32;
  if (xs.size() <= kLeaf) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

}  // namespace bistoch::detail
