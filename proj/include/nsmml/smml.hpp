#pragma once

/** @file
 * Discrete Strict MML.
 *
 * A DiscreteProblem is a finite set of observation cells with masses summing
 * to one, a finite set of candidate parameter values, and the penalty matrix
 * penalty(i, j) = R_{candidate j}(cell i). A code-book assigns every cell to
 * one candidate; its cost is
 *
 *   L_E = -sum_j q_j log q_j   (q_j = mass assigned to candidate j)
 *   L_P =  sum_i mass_i penalty(i, assign_i)
 *   L   =  L_E + L_P
 *
 * in nats. Problems either come from a table (generic) or from discretising
 * the Neyman-Scott problem on a lattice in (log s, m / s) coordinates, with
 * candidates on the matching lattice in (log sigma, mu / sigma).
 */

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "nsmml/box.hpp"
#include "nsmml/model.hpp"

namespace nsmml {

enum class Topology {
  Generic,  // no lattice structure
  Box,      // truncated lattice, penalties from R directly
  Torus,    // periodic lattice, penalties from wrapped lattice offsets
};

/// Lattice geometry of a discretised problem. Cell index tuple c maps to
/// centre origin + (c + 1/2) * spacing; candidate index tuple k maps to
/// origin + (k - candidate_offset + 1/2) * spacing.
struct LatticeInfo {
  std::vector<int> cells_per_axis;
  std::vector<double> origin;
  std::vector<double> spacing;
  std::vector<int> candidates_per_axis;
  std::vector<int> candidate_offset;

  std::size_t dims() const { return cells_per_axis.size(); }
  std::vector<int> cell_index(std::size_t flat) const;
  std::size_t cell_flat(std::span<const int> index) const;
  std::vector<int> candidate_index(std::size_t flat) const;
  std::size_t candidate_flat(std::span<const int> index) const;
  std::vector<double> cell_center(std::span<const int> index) const;
  std::vector<double> candidate_center(std::span<const int> index) const;
  std::vector<double> period() const;  // box widths
};

struct Cell {
  double mass = 0.0;
  std::vector<double> center;  // (log s, m / s); empty for generic problems
  std::optional<SufficientStat> stat;
};

class DiscreteProblem {
 public:
  /// Generic problem from a table. Throws std::invalid_argument unless
  /// masses are positive and sum to 1 within 1e-12 and every penalty is
  /// finite. penalty is row-major, cells x candidates.
  DiscreteProblem(std::vector<double> masses, std::size_t num_candidates, std::vector<double> penalty);

  /// Fully specified problem (used by discretize and the reader).
  DiscreteProblem(Topology topology, std::vector<Cell> cells, std::vector<Parameter> candidates,
                  std::vector<double> penalty, std::optional<LatticeInfo> lattice, std::optional<ProblemConfig> cfg,
                  std::optional<PriorSpec> prior);

  Topology topology() const { return topology_; }
  std::size_t num_cells() const { return cells_.size(); }
  std::size_t num_candidates() const { return num_candidates_; }
  double mass(std::size_t cell) const { return cells_[cell].mass; }
  double penalty(std::size_t cell, std::size_t candidate) const { return penalty_[cell * num_candidates_ + candidate]; }
  std::span<const double> penalty_row(std::size_t cell) const {
    return {penalty_.data() + cell * num_candidates_, num_candidates_};
  }

  const std::vector<Cell>& cells() const { return cells_; }
  /// Candidate parameters; empty for generic problems.
  const std::vector<Parameter>& candidates() const { return candidates_; }
  const std::optional<LatticeInfo>& lattice() const { return lattice_; }
  const std::optional<ProblemConfig>& config() const { return cfg_; }
  const std::optional<PriorSpec>& prior() const { return prior_; }

 private:
  void validate() const;

  Topology topology_ = Topology::Generic;
  std::vector<Cell> cells_;
  std::size_t num_candidates_ = 0;
  std::vector<Parameter> candidates_;
  std::vector<double> penalty_;
  std::optional<LatticeInfo> lattice_;
  std::optional<ProblemConfig> cfg_;
  std::optional<PriorSpec> prior_;
};

struct DiscretizeOptions {
  Box box;                      // in (log s, m / s); N + 1 axes
  std::vector<int> resolution;  // cells per axis, each >= 2
  Topology topology = Topology::Box;
};

/// Box topology: penalties are R evaluated at the cell-centre statistics and
/// candidates extend one box width beyond the observation box on every axis.
///
/// Torus topology (scale-free prior only): candidates coincide with cell
/// centres and the penalty of (cell, candidate) is R_{(1, 0)} evaluated at the
/// wrapped lattice offset between them, read as a point in (log s, m / s).
/// This is R as seen from the candidate; it is exact along the log-scale
/// axis and makes every lattice shift an exact symmetry of the problem.
DiscreteProblem discretize(const ProblemConfig& cfg, const PriorSpec& prior, const DiscretizeOptions& options);

struct CodebookCost {
  double entropy = 0.0;  // L_E
  double penalty = 0.0;  // L_P
  double total = 0.0;    // L
};

struct Codebook {
  std::vector<int> assign;
  CodebookCost cost;

  bool operator==(const Codebook& other) const { return assign == other.assign; }
};

CodebookCost codebook_cost(const DiscreteProblem& problem, std::span<const int> assign);
Codebook make_codebook(const DiscreteProblem& problem, std::vector<int> assign);

/// Every cell assigned to its smallest-penalty candidate (the maximum
/// likelihood candidate, since r(x) does not depend on theta). Ties go to the
/// lowest index.
Codebook pointwise_codebook(const DiscreteProblem& problem);

struct ExhaustiveLimits {
  std::size_t max_cells = 16;
  std::size_t max_candidates = 256;
  std::size_t max_solutions = 100000;
};

/// All code-books whose cost is within tol of the global minimum, sorted by
/// assignment. Exact: dynamic programming over subsets of cells, where each
/// block of a partition takes its cheapest candidate. Throws
/// std::length_error when the problem exceeds the limits.
std::vector<Codebook> smml_exhaustive(const DiscreteProblem& problem, double tol = 1e-12,
                                      const ExhaustiveLimits& limits = {});

struct LocalSearchOptions {
  int restarts = 8;
  std::uint64_t seed = 0;
  int max_passes = 10000;
  /// Called after every accepted move with the new assignment and the
  /// incrementally maintained cost L.
  std::function<void(std::span<const int>, double)> on_accept;
};

/// Alternating descent: (a) single-cell reassignment, first improvement in
/// cell order, best candidate per cell with ties to the lowest index;
/// (b) moving a whole region to the candidate that minimises its cost. Runs
/// to a local optimum. Restart 0 starts from the pointwise code-book; later
/// restarts seed from random subsets of pointwise candidates. The best result
/// over restarts wins, ties to the lowest restart index.
Codebook smml_local_search(const DiscreteProblem& problem, const LocalSearchOptions& options);

struct RegionMassAudit {
  double max_region_mass = 0.0;
  std::size_t regions = 0;
  std::vector<std::size_t> histogram;  // 10 bins over [0, 1]
};

RegionMassAudit region_mass_audit(const DiscreteProblem& problem, const Codebook& codebook);

struct OverlapReport {
  std::vector<std::size_t> interior_cells;
  std::vector<double> distance;         // assigned candidate to the cell's IP estimate
  std::vector<double> region_diameter;  // of the region holding the cell
  double fraction_within_one_region_diameter = 0.0;
};

/// Distances in (log sigma, mu / sigma) coordinates, wrapped on the torus.
/// Interior cells are at least interior_margin cells from the truncation
/// boundary; every cell of a torus is interior.
OverlapReport smml_ip_overlap(const DiscreteProblem& problem, const Codebook& codebook, int interior_margin);

struct TransportResult {
  Codebook codebook;
  double delta_total = 0.0;  // L(transported) - L(original)
  /// Bound on |delta_total|: 0 on the torus; on a box, from the mass of the
  /// boundary layers that enter or leave.
  double bound = 0.0;
  bool exact = false;
};

/// Shifts a code-book by a whole number of cells per axis, moving candidates
/// by the same lattice vector. Torus problems wrap. Box problems accept shifts
/// along the log-scale axis only (the only lattice direction that is an
/// exact symmetry of R there); cells entering from outside the box copy the
/// nearest in-box source. Requires the scale-free prior. Throws
/// std::invalid_argument for incompatible shifts.
TransportResult codebook_transport(const DiscreteProblem& problem, const Codebook& codebook,
                                   std::span<const int> shift);

// Text serialisation (versioned header, cell table, candidate table,
// penalty rows). Numbers are written in shortest round-trip form, so
// write -> read reproduces the problem bit for bit.
void write_problem(std::ostream& out, const DiscreteProblem& problem);
DiscreteProblem read_problem(std::istream& in);
void write_codebook(std::ostream& out, const Codebook& codebook);
Codebook read_codebook(std::istream& in);

}  // namespace nsmml
