#pragma once

/** @file
 * Portable, seedable random numbers.
 *
 * The engine is std::mt19937_64 (its output sequence is fixed by the C++
 * standard) seeded through std::seed_seq (also fully specified). Uniforms use
 * the top 53 bits of each draw and normals use the Box-Muller transform, so a
 * given seed yields the same stream on every conforming platform. The
 * standard distribution classes are avoided because their algorithms are
 * implementation-defined.
 */

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace nsmml {

class Rng {
 public:
  /// Stream identified by a root seed and a path of sub-stream indices,
  /// e.g. Rng(seed, {n_groups, trial}).
  explicit Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {});

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, bound).
  std::uint64_t below(std::uint64_t bound);
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace nsmml
