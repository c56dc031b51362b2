#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "terra/core/error.hpp"

namespace terra {

/// Type-7 percentile (linear interpolation between order statistics), p in [0, 100].
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("percentile of an empty set");
  if (!(p >= 0.0 && p <= 100.0)) throw InvalidArgument("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace terra
