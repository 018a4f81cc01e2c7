#pragma once

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>

namespace nsmml::detail {

/// Root of fn on [lo, hi]; fn(lo) and fn(hi) must differ in sign.
inline double root_between(const std::function<double(double)>& fn, double lo, double hi) {
  std::uintmax_t max_iter = 200;
  const auto tol = boost::math::tools::eps_tolerance<double>(std::numeric_limits<double>::digits - 3);
  const auto [a, b] = boost::math::tools::toms748_solve(fn, lo, hi, tol, max_iter);
  return 0.5 * (a + b);
}

/// Largest value of fn on [lo, hi]: dense scan, then Brent on the bracket
/// around the best sample.
inline double max_over(const std::function<double(double)>& fn, double lo, double hi) {
  constexpr int kSamples = 512;
  const double step = (hi - lo) / kSamples;
  int best = 0;
  double best_value = fn(lo);
  for (int i = 1; i <= kSamples; ++i) {
    const double v = fn(lo + i * step);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  const double a = lo + std::max(best - 1, 0) * step;
  const double b = lo + std::min(best + 1, kSamples) * step;
  std::uintmax_t max_iter = 200;
  const auto [x, neg] = boost::math::tools::brent_find_minima([&](double t) { return -fn(t); }, a, b,
                                                              std::numeric_limits<double>::digits / 2, max_iter);
  return std::max(best_value, -neg);
}

}  // namespace nsmml::detail
