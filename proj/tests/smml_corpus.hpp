#pragma once

// Random discrete SMML instances shared by the unit tests and the acceptance
// binary.

#include <cmath>
#include <vector>

#include "nsmml/random.hpp"
#include "nsmml/smml.hpp"

namespace corpus {

inline std::vector<double> random_masses(nsmml::Rng& rng, int cells) {
  std::vector<double> mass;
  double total = 0.0;
  for (int i = 0; i < cells; ++i) {
    mass.push_back(0.2 + rng.uniform());
    total += mass.back();
  }
  for (auto& m : mass) m /= total;
  return mass;
}

/// Unstructured penalties, uniform on [0, 3).
inline nsmml::DiscreteProblem random_instance(nsmml::Rng& rng, int cells, int candidates) {
  auto mass = random_masses(rng, cells);
  std::vector<double> penalty;
  for (int i = 0; i < cells * candidates; ++i) penalty.push_back(3.0 * rng.uniform());
  return nsmml::DiscreteProblem(std::move(mass), static_cast<std::size_t>(candidates), std::move(penalty));
}

/// Cells and candidates on a line; penalty grows quadratically with the
/// distance, plus a little noise. Closer to what discretised problems look like.
inline nsmml::DiscreteProblem geometric_instance(nsmml::Rng& rng, int cells, int candidates) {
  auto mass = random_masses(rng, cells);
  std::vector<double> cell_x;
  std::vector<double> cand_x;
  for (int i = 0; i < cells; ++i) cell_x.push_back(rng.uniform(0.0, 4.0));
  for (int j = 0; j < candidates; ++j) cand_x.push_back(rng.uniform(-0.5, 4.5));
  const double curvature = 0.5 + 2.0 * rng.uniform();
  std::vector<double> penalty;
  for (int i = 0; i < cells; ++i) {
    for (int j = 0; j < candidates; ++j) {
      const double d = cell_x[static_cast<std::size_t>(i)] - cand_x[static_cast<std::size_t>(j)];
      penalty.push_back(1.0 + curvature * d * d + 0.1 * rng.uniform());
    }
  }
  return nsmml::DiscreteProblem(std::move(mass), static_cast<std::size_t>(candidates), std::move(penalty));
}

/// The 50-instance oracle corpus: up to 12 cells and 8 candidates, half of
/// each kind.
inline std::vector<nsmml::DiscreteProblem> oracle_corpus(std::uint64_t seed) {
  nsmml::Rng rng(seed);
  std::vector<nsmml::DiscreteProblem> out;
  for (int i = 0; i < 50; ++i) {
    const int cells = 4 + static_cast<int>(rng.below(9));
    const int candidates = 2 + static_cast<int>(rng.below(7));
    out.push_back(i % 2 == 0 ? random_instance(rng, cells, candidates) : geometric_instance(rng, cells, candidates));
  }
  return out;
}

}  // namespace corpus
