#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "tracenav/geometry.hpp"

namespace tracenav {

// Even counts take the midpoint of the two middle values.
inline double median(std::vector<double> v) {
  if (v.empty()) throw InputError("median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

inline Point3 componentwise_median(std::span<const Point3> pts) {
  Point3 out;
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> v;
    v.reserve(pts.size());
    for (const auto& p : pts) v.push_back(p[axis]);
    out[axis] = median(std::move(v));
  }
  return out;
}

}  // namespace tracenav
