#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace nsmml {

/// Axis-aligned box [lo_i, hi_i] in some coordinate system.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dims() const { return lo.size(); }
  double width(std::size_t axis) const { return hi[axis] - lo[axis]; }

  bool contains(std::span<const double> point, double slack = 0.0) const {
    if (point.size() != lo.size()) throw std::invalid_argument("Box::contains: dimension mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (point[i] < lo[i] - slack || point[i] > hi[i] + slack) return false;
    }
    return true;
  }

  bool contains(const Box& inner, double slack = 0.0) const {
    return contains(inner.lo, slack) && contains(inner.hi, slack);
  }

  double volume() const {
    double v = 1.0;
    for (std::size_t i = 0; i < lo.size(); ++i) v *= width(i);
    return v;
  }
};

}  // namespace nsmml
