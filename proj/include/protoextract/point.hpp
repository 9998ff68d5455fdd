#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace protoextract {

/// A point in R^d. Features are pre-normalized to [0,1] by the data layer,
/// but nothing below assumes that.
using Point = std::vector<double>;

inline double dot(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sq_norm(const Point& a) { return dot(a, a); }

inline double sq_dist(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

inline bool all_finite(const Point& a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace protoextract
