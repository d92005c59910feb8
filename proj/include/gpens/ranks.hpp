#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "gpens/types.hpp"

namespace gpens {

/// 1-based ranks of v in ascending order; exact ties receive the average of
/// the ranks they span. Shared by the cross-sectional feature transform and
/// the rank-correlation metrics so both use the same tie convention.
inline Vec average_ranks(const Vec& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
  Vec ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v(idx[static_cast<size_t>(j + 1)]) == v(idx[static_cast<size_t>(i)])) ++j;
    // positions i..j (0-based) share the average of ranks i+1..j+1
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks(idx[static_cast<size_t>(k)]) = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace gpens
