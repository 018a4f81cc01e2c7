#include "nsmml/smml.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "nsmml/detail/parallel.hpp"
#include "nsmml/estimators.hpp"
#include "nsmml/random.hpp"

namespace nsmml {

namespace {

constexpr double kAcceptThreshold = -1e-14;

double entropy_term(double q) { return q > 0.0 ? -q * std::log(q) : 0.0; }

double binary_entropy(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 0.5) return std::log(2.0);
  return -t * std::log(t) - (1.0 - t) * std::log1p(-t);
}

std::vector<int> unflatten(std::size_t flat, const std::vector<int>& extent) {
  std::vector<int> index(extent.size());
  for (std::size_t d = extent.size(); d-- > 0;) {
    const auto e = static_cast<std::size_t>(extent[d]);
    index[d] = static_cast<int>(flat % e);
    flat /= e;
  }
  return index;
}

std::size_t flatten(std::span<const int> index, const std::vector<int>& extent) {
  if (index.size() != extent.size()) throw std::invalid_argument("lattice index has the wrong dimension");
  std::size_t flat = 0;
  for (std::size_t d = 0; d < extent.size(); ++d) {
    if (index[d] < 0 || index[d] >= extent[d]) throw std::out_of_range("lattice index out of range");
    flat = flat * static_cast<std::size_t>(extent[d]) + static_cast<std::size_t>(index[d]);
  }
  return flat;
}

int wrap(int value, int period) {
  const int r = value % period;
  return r < 0 ? r + period : r;
}

// Offset in (-period/2, period/2].
int wrapped_offset(int value, int period) {
  int r = wrap(value, period);
  if (2 * r > period) r -= period;
  return r;
}

double wrapped_distance(std::span<const double> a, std::span<const double> b, const std::vector<double>* period) {
  double sum = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    double diff = a[d] - b[d];
    if (period) {
      const double p = (*period)[d];
      diff -= p * std::round(diff / p);
    }
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

std::size_t argmin_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] < row[best]) best = j;
  }
  return best;
}

void require_assignment(const DiscreteProblem& problem, std::span<const int> assign) {
  if (assign.size() != problem.num_cells()) {
    throw std::invalid_argument("code-book assigns " + std::to_string(assign.size()) + " cells, problem has " +
                                std::to_string(problem.num_cells()));
  }
  for (int a : assign) {
    if (a < 0 || static_cast<std::size_t>(a) >= problem.num_candidates()) {
      throw std::invalid_argument("code-book refers to candidate " + std::to_string(a) + " out of range");
    }
  }
}

}  // namespace

std::vector<int> LatticeInfo::cell_index(std::size_t flat) const { return unflatten(flat, cells_per_axis); }
std::size_t LatticeInfo::cell_flat(std::span<const int> index) const { return flatten(index, cells_per_axis); }
std::vector<int> LatticeInfo::candidate_index(std::size_t flat) const { return unflatten(flat, candidates_per_axis); }
std::size_t LatticeInfo::candidate_flat(std::span<const int> index) const {
  return flatten(index, candidates_per_axis);
}

std::vector<double> LatticeInfo::cell_center(std::span<const int> index) const {
  std::vector<double> centre(dims());
  for (std::size_t d = 0; d < dims(); ++d) centre[d] = origin[d] + (index[d] + 0.5) * spacing[d];
  return centre;
}

std::vector<double> LatticeInfo::candidate_center(std::span<const int> index) const {
  std::vector<double> centre(dims());
  for (std::size_t d = 0; d < dims(); ++d) {
    centre[d] = origin[d] + ((index[d] - candidate_offset[d]) + 0.5) * spacing[d];
  }
  return centre;
}

std::vector<double> LatticeInfo::period() const {
  std::vector<double> p(dims());
  for (std::size_t d = 0; d < dims(); ++d) p[d] = cells_per_axis[d] * spacing[d];
  return p;
}

DiscreteProblem::DiscreteProblem(std::vector<double> masses, std::size_t num_candidates, std::vector<double> penalty)
    : num_candidates_(num_candidates), penalty_(std::move(penalty)) {
  cells_.reserve(masses.size());
  for (double m : masses) cells_.push_back(Cell{m, {}, std::nullopt});
  validate();
}

DiscreteProblem::DiscreteProblem(Topology topology, std::vector<Cell> cells, std::vector<Parameter> candidates,
                                 std::vector<double> penalty, std::optional<LatticeInfo> lattice,
                                 std::optional<ProblemConfig> cfg, std::optional<PriorSpec> prior)
    : topology_(topology),
      cells_(std::move(cells)),
      num_candidates_(candidates.size()),
      candidates_(std::move(candidates)),
      penalty_(std::move(penalty)),
      lattice_(std::move(lattice)),
      cfg_(cfg),
      prior_(prior) {
  if (topology_ != Topology::Generic && (!lattice_ || !cfg_ || !prior_)) {
    throw std::invalid_argument("lattice problems need lattice, config and prior");
  }
  validate();
}

void DiscreteProblem::validate() const {
  if (cells_.empty()) throw std::invalid_argument("DiscreteProblem: no cells");
  if (num_candidates_ == 0) throw std::invalid_argument("DiscreteProblem: no candidates");
  if (penalty_.size() != cells_.size() * num_candidates_) {
    throw std::invalid_argument("DiscreteProblem: penalty table has the wrong size");
  }
  double total = 0.0;
  for (const auto& cell : cells_) {
    if (!(cell.mass > 0.0) || !std::isfinite(cell.mass)) {
      throw std::invalid_argument("DiscreteProblem: cell masses must be positive");
    }
    total += cell.mass;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument(fmt::format("DiscreteProblem: masses sum to {}, not 1", total));
  }
  for (double p : penalty_) {
    if (!std::isfinite(p)) throw std::invalid_argument("DiscreteProblem: penalties must be finite");
  }
  if (lattice_) {
    std::size_t cells = 1;
    std::size_t candidates = 1;
    for (int c : lattice_->cells_per_axis) cells *= static_cast<std::size_t>(c);
    for (int c : lattice_->candidates_per_axis) candidates *= static_cast<std::size_t>(c);
    if (cells != cells_.size() || candidates != num_candidates_) {
      throw std::invalid_argument("DiscreteProblem: lattice does not match the tables");
    }
  }
}

DiscreteProblem discretize(const ProblemConfig& cfg, const PriorSpec& prior, const DiscretizeOptions& options) {
  const auto dims = static_cast<std::size_t>(cfg.num_groups()) + 1;
  if (options.box.dims() != dims || options.box.hi.size() != dims || options.resolution.size() != dims) {
    throw std::invalid_argument("discretize: box and resolution need N + 1 axes");
  }
  if (options.topology == Topology::Generic) throw std::invalid_argument("discretize: topology must be box or torus");
  const bool torus = options.topology == Topology::Torus;
  if (torus && !prior.is_scale_free(cfg)) {
    throw std::invalid_argument("discretize: the torus variant needs the scale-free prior");
  }

  LatticeInfo lattice;
  for (std::size_t d = 0; d < dims; ++d) {
    if (options.resolution[d] < 2) throw std::invalid_argument("discretize: resolution must be at least 2");
    if (!(options.box.hi[d] > options.box.lo[d])) throw std::invalid_argument("discretize: empty box");
    lattice.cells_per_axis.push_back(options.resolution[d]);
    lattice.origin.push_back(options.box.lo[d]);
    lattice.spacing.push_back(options.box.width(d) / options.resolution[d]);
    lattice.candidates_per_axis.push_back(torus ? options.resolution[d] : 3 * options.resolution[d]);
    lattice.candidate_offset.push_back(torus ? 0 : options.resolution[d]);
  }

  std::size_t num_cells = 1;
  std::size_t num_candidates = 1;
  for (std::size_t d = 0; d < dims; ++d) {
    num_cells *= static_cast<std::size_t>(lattice.cells_per_axis[d]);
    num_candidates *= static_cast<std::size_t>(lattice.candidates_per_axis[d]);
  }
  double log_cell_volume = 0.0;
  for (double s : lattice.spacing) log_cell_volume += std::log(s);

  // Cell masses: marginal density in (log s, m/s) is r_stat(s, m) s^(N+1).
  std::vector<Cell> cells(num_cells);
  std::vector<double> log_mass(num_cells);
  std::vector<double> log_marg(num_cells);
  for (std::size_t i = 0; i < num_cells; ++i) {
    const auto index = lattice.cell_index(i);
    cells[i].center = lattice.cell_center(index);
    cells[i].stat = stat_from_log_scale(cells[i].center);
    log_marg[i] = log_marginal(*cells[i].stat, prior, cfg);
    log_mass[i] = log_marginal_stat_density(*cells[i].stat, prior, cfg) + static_cast<double>(dims) * cells[i].center[0] +
                  log_cell_volume;
  }
  const double peak = *std::max_element(log_mass.begin(), log_mass.end());
  double total = 0.0;
  for (double l : log_mass) total += std::exp(l - peak);
  for (std::size_t i = 0; i < num_cells; ++i) cells[i].mass = std::exp(log_mass[i] - peak) / total;

  std::vector<Parameter> candidates(num_candidates);
  for (std::size_t j = 0; j < num_candidates; ++j) {
    candidates[j] = parameter_from_log_scale(lattice.candidate_center(lattice.candidate_index(j)));
  }

  std::vector<double> penalty(num_cells * num_candidates);
  if (torus) {
    // One kernel value per wrapped offset, so equal offsets give bit-equal penalties.
    const Parameter origin_theta{1.0, std::vector<double>(dims - 1, 0.0)};
    std::vector<double> kernel(num_cells);
    for (std::size_t k = 0; k < num_cells; ++k) {
      const auto offset = lattice.cell_index(k);
      std::vector<double> point(dims);
      for (std::size_t d = 0; d < dims; ++d) {
        point[d] = wrapped_offset(offset[d], lattice.cells_per_axis[d]) * lattice.spacing[d];
      }
      kernel[k] = code_penalty(origin_theta, stat_from_log_scale(point), prior, cfg);
    }
    for (std::size_t i = 0; i < num_cells; ++i) {
      const auto ci = lattice.cell_index(i);
      for (std::size_t j = 0; j < num_candidates; ++j) {
        const auto cj = lattice.candidate_index(j);
        std::vector<int> offset(dims);
        for (std::size_t d = 0; d < dims; ++d) offset[d] = wrap(ci[d] - cj[d], lattice.cells_per_axis[d]);
        penalty[i * num_candidates + j] = kernel[lattice.cell_flat(offset)];
      }
    }
  } else {
    detail::parallel_for(num_cells, [&](std::size_t i) {
      for (std::size_t j = 0; j < num_candidates; ++j) {
        penalty[i * num_candidates + j] = log_marg[i] - log_likelihood(*cells[i].stat, candidates[j], cfg);
      }
    });
  }

  return DiscreteProblem(options.topology, std::move(cells), std::move(candidates), std::move(penalty),
                         std::move(lattice), cfg, prior);
}

CodebookCost codebook_cost(const DiscreteProblem& problem, std::span<const int> assign) {
  require_assignment(problem, assign);
  std::vector<double> region(problem.num_candidates(), 0.0);
  CodebookCost cost;
  for (std::size_t i = 0; i < assign.size(); ++i) {
    const auto j = static_cast<std::size_t>(assign[i]);
    region[j] += problem.mass(i);
    cost.penalty += problem.mass(i) * problem.penalty(i, j);
  }
  for (double q : region) cost.entropy += entropy_term(q);
  cost.total = cost.entropy + cost.penalty;
  return cost;
}

Codebook make_codebook(const DiscreteProblem& problem, std::vector<int> assign) {
  Codebook book{std::move(assign), {}};
  book.cost = codebook_cost(problem, book.assign);
  return book;
}

Codebook pointwise_codebook(const DiscreteProblem& problem) {
  std::vector<int> assign(problem.num_cells());
  for (std::size_t i = 0; i < problem.num_cells(); ++i) {
    assign[i] = static_cast<int>(argmin_row(problem.penalty_row(i)));
  }
  return make_codebook(problem, std::move(assign));
}

std::vector<Codebook> smml_exhaustive(const DiscreteProblem& problem, double tol, const ExhaustiveLimits& limits) {
  const std::size_t n = problem.num_cells();
  const std::size_t k = problem.num_candidates();
  if (n > limits.max_cells || n > 24) {
    throw std::length_error(fmt::format("smml_exhaustive: {} cells exceeds the limit of {}", n, limits.max_cells));
  }
  if (k > limits.max_candidates) {
    throw std::length_error(
        fmt::format("smml_exhaustive: {} candidates exceeds the limit of {}", k, limits.max_candidates));
  }
  const std::uint32_t full = (std::uint32_t{1} << n) - 1;
  const std::size_t subsets = std::size_t{1} << n;

  std::vector<double> mass(subsets, 0.0);
  for (std::uint32_t s = 1; s <= full; ++s) {
    const int low = std::countr_zero(s);
    mass[s] = mass[s & (s - 1)] + problem.mass(static_cast<std::size_t>(low));
  }
  // Cheapest candidate for every block.
  std::vector<double> best(subsets, std::numeric_limits<double>::infinity());
  std::vector<double> acc(subsets, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::uint32_t s = 1; s <= full; ++s) {
      const auto low = static_cast<std::size_t>(std::countr_zero(s));
      acc[s] = acc[s & (s - 1)] + problem.mass(low) * problem.penalty(low, j);
      best[s] = std::min(best[s], acc[s]);
    }
  }
  std::vector<double> block(subsets, 0.0);
  for (std::uint32_t s = 1; s <= full; ++s) block[s] = entropy_term(mass[s]) + best[s];

  // opt[S] = min over blocks B containing the lowest cell of S.
  std::vector<double> opt(subsets, std::numeric_limits<double>::infinity());
  opt[0] = 0.0;
  for (std::uint32_t s = 1; s <= full; ++s) {
    const std::uint32_t low = s & (~s + 1);
    const std::uint32_t rest = s ^ low;
    double value = std::numeric_limits<double>::infinity();
    for (std::uint32_t sub = rest;; sub = (sub - 1) & rest) {
      value = std::min(value, block[sub | low] + opt[rest ^ sub]);
      if (sub == 0) break;
    }
    opt[s] = value;
  }
  const double target = opt[full] + tol;

  // Enumerate every partition within tolerance of the optimum.
  std::vector<std::vector<std::uint32_t>> partitions;
  std::vector<std::uint32_t> current;
  std::function<void(std::uint32_t, double)> descend = [&](std::uint32_t remaining, double cost) {
    if (partitions.size() >= limits.max_solutions) return;
    if (remaining == 0) {
      partitions.push_back(current);
      return;
    }
    const std::uint32_t low = remaining & (~remaining + 1);
    const std::uint32_t rest = remaining ^ low;
    for (std::uint32_t sub = rest;; sub = (sub - 1) & rest) {
      const std::uint32_t b = sub | low;
      if (cost + block[b] + opt[remaining ^ b] <= target) {
        current.push_back(b);
        descend(remaining ^ b, cost + block[b]);
        current.pop_back();
      }
      if (sub == 0) break;
    }
  };
  descend(full, 0.0);

  std::vector<Codebook> books;
  for (const auto& partition : partitions) {
    // Candidates within tolerance of the cheapest, per block.
    std::vector<std::vector<int>> choices;
    for (std::uint32_t b : partition) {
      std::vector<double> sums(k, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (b & (std::uint32_t{1} << i)) {
          for (std::size_t j = 0; j < k; ++j) sums[j] += problem.mass(i) * problem.penalty(i, j);
        }
      }
      const double low = *std::min_element(sums.begin(), sums.end());
      std::vector<int> ok;
      for (std::size_t j = 0; j < k; ++j) {
        if (sums[j] <= low + tol) ok.push_back(static_cast<int>(j));
      }
      choices.push_back(std::move(ok));
    }
    std::vector<int> assign(n, -1);
    std::vector<int> chosen;
    std::function<void(std::size_t)> pick = [&](std::size_t depth) {
      if (books.size() >= limits.max_solutions) return;
      if (depth == partition.size()) {
        Codebook book = make_codebook(problem, assign);
        if (book.cost.total <= target) books.push_back(std::move(book));
        return;
      }
      for (int j : choices[depth]) {
        if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
        chosen.push_back(j);
        for (std::size_t i = 0; i < n; ++i) {
          if (partition[depth] & (std::uint32_t{1} << i)) assign[i] = j;
        }
        pick(depth + 1);
        chosen.pop_back();
      }
    };
    pick(0);
  }
  if (books.empty()) throw std::logic_error("smml_exhaustive: optimum could not be reconstructed");
  const double best_total =
      std::min_element(books.begin(), books.end(), [](const Codebook& a, const Codebook& b) {
        return a.cost.total < b.cost.total;
      })->cost.total;
  std::erase_if(books, [&](const Codebook& b) { return b.cost.total > best_total + tol; });
  std::sort(books.begin(), books.end(), [](const Codebook& a, const Codebook& b) { return a.assign < b.assign; });
  books.erase(std::unique(books.begin(), books.end()), books.end());
  return books;
}

namespace {

class DescentState {
 public:
  DescentState(const DiscreteProblem& problem, std::vector<int> assign)
      : problem_(problem), assign_(std::move(assign)), region_(problem.num_candidates(), 0.0),
        members_(problem.num_candidates(), 0) {
    for (std::size_t i = 0; i < assign_.size(); ++i) {
      const auto j = static_cast<std::size_t>(assign_[i]);
      region_[j] += problem_.mass(i);
      ++members_[j];
    }
    total_ = codebook_cost(problem_, assign_).total;
  }

  const std::vector<int>& assign() const { return assign_; }
  double total() const { return total_; }

  // Best single-cell move for cell i; returns (delta, candidate) with
  // candidate = -1 when nothing improves.
  std::pair<double, int> best_cell_move(std::size_t i) const {
    const auto from = static_cast<std::size_t>(assign_[i]);
    const double m = problem_.mass(i);
    const double leave = entropy_term(members_[from] == 1 ? 0.0 : region_[from] - m) - entropy_term(region_[from]);
    const auto row = problem_.penalty_row(i);
    double best = 0.0;
    int target = -1;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j == from) continue;
      const double delta =
          leave + entropy_term(region_[j] + m) - entropy_term(region_[j]) + m * (row[j] - row[from]);
      if (delta < best) {
        best = delta;
        target = static_cast<int>(j);
      }
    }
    return {best, target};
  }

  void move_cell(std::size_t i, int to, double delta) {
    const auto from = static_cast<std::size_t>(assign_[i]);
    const auto dest = static_cast<std::size_t>(to);
    const double m = problem_.mass(i);
    if (--members_[from] == 0) {
      region_[from] = 0.0;
    } else {
      region_[from] -= m;
    }
    ++members_[dest];
    region_[dest] += m;
    assign_[i] = to;
    total_ += delta;
  }

  // Best candidate for the whole region currently coded by `from`.
  std::pair<double, int> best_region_move(std::size_t from, const std::vector<std::size_t>& cells) const {
    const std::size_t k = problem_.num_candidates();
    std::vector<double> shift(k, 0.0);
    for (std::size_t i : cells) {
      const double m = problem_.mass(i);
      const auto row = problem_.penalty_row(i);
      for (std::size_t j = 0; j < k; ++j) shift[j] += m * (row[j] - row[from]);
    }
    const double q = region_[from];
    double best = 0.0;
    int target = -1;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == from) continue;
      const double delta = entropy_term(region_[j] + q) - entropy_term(region_[j]) - entropy_term(q) + shift[j];
      if (delta < best) {
        best = delta;
        target = static_cast<int>(j);
      }
    }
    return {best, target};
  }

  void move_region(std::size_t from, const std::vector<std::size_t>& cells, int to, double delta) {
    const auto dest = static_cast<std::size_t>(to);
    region_[dest] += region_[from];
    members_[dest] += members_[from];
    region_[from] = 0.0;
    members_[from] = 0;
    for (std::size_t i : cells) assign_[i] = to;
    total_ += delta;
  }

 private:
  const DiscreteProblem& problem_;
  std::vector<int> assign_;
  std::vector<double> region_;
  std::vector<std::size_t> members_;
  double total_ = 0.0;
};

Codebook descend(const DiscreteProblem& problem, std::vector<int> start, const LocalSearchOptions& options) {
  DescentState state(problem, std::move(start));
  auto notify = [&] {
    if (options.on_accept) options.on_accept(state.assign(), state.total());
  };
  for (int pass = 0; pass < options.max_passes; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < problem.num_cells(); ++i) {
      const auto [delta, target] = state.best_cell_move(i);
      if (target >= 0 && delta < kAcceptThreshold) {
        state.move_cell(i, target, delta);
        moved = true;
        notify();
      }
    }
    for (std::size_t j = 0; j < problem.num_candidates(); ++j) {
      std::vector<std::size_t> cells;
      for (std::size_t i = 0; i < problem.num_cells(); ++i) {
        if (static_cast<std::size_t>(state.assign()[i]) == j) cells.push_back(i);
      }
      if (cells.empty()) continue;
      const auto [delta, target] = state.best_region_move(j, cells);
      if (target >= 0 && delta < kAcceptThreshold) {
        state.move_region(j, cells, target, delta);
        moved = true;
        notify();
      }
    }
    if (!moved) break;
  }
  return make_codebook(problem, state.assign());
}

}  // namespace

Codebook smml_local_search(const DiscreteProblem& problem, const LocalSearchOptions& options) {
  if (options.restarts < 1) throw std::invalid_argument("smml_local_search: restarts must be at least 1");
  const Codebook pointwise = pointwise_codebook(problem);
  const std::size_t n = problem.num_cells();

  auto start_for = [&](int restart) {
    if (restart == 0) return pointwise.assign;
    Rng rng(options.seed, {static_cast<std::uint64_t>(restart)});
    const std::uint64_t picks = 1 + rng.below(n);
    std::vector<int> pool;
    for (std::uint64_t p = 0; p < picks; ++p) pool.push_back(pointwise.assign[rng.below(n)]);
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    std::vector<int> assign(n);
    for (std::size_t i = 0; i < n; ++i) {
      int best = pool.front();
      for (int j : pool) {
        if (problem.penalty(i, static_cast<std::size_t>(j)) < problem.penalty(i, static_cast<std::size_t>(best))) {
          best = j;
        }
      }
      assign[i] = best;
    }
    return assign;
  };

  std::vector<Codebook> results(static_cast<std::size_t>(options.restarts));
  auto run = [&](std::size_t r) { results[r] = descend(problem, start_for(static_cast<int>(r)), options); };
  if (options.on_accept) {
    for (std::size_t r = 0; r < results.size(); ++r) run(r);
  } else {
    detail::parallel_for(results.size(), run);
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r) {
    if (results[r].cost.total < results[best].cost.total) best = r;
  }
  return results[best];
}

RegionMassAudit region_mass_audit(const DiscreteProblem& problem, const Codebook& codebook) {
  require_assignment(problem, codebook.assign);
  std::vector<double> region(problem.num_candidates(), 0.0);
  for (std::size_t i = 0; i < codebook.assign.size(); ++i) {
    region[static_cast<std::size_t>(codebook.assign[i])] += problem.mass(i);
  }
  RegionMassAudit audit;
  audit.histogram.assign(10, 0);
  for (double q : region) {
    if (q <= 0.0) continue;
    ++audit.regions;
    audit.max_region_mass = std::max(audit.max_region_mass, q);
    const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(q * 10.0));
    ++audit.histogram[bin];
  }
  return audit;
}

OverlapReport smml_ip_overlap(const DiscreteProblem& problem, const Codebook& codebook, int interior_margin) {
  if (interior_margin < 1) throw std::invalid_argument("smml_ip_overlap: interior margin must be at least 1");
  if (!problem.lattice() || !problem.config() || !problem.prior()) {
    throw std::invalid_argument("smml_ip_overlap: needs a discretised Neyman-Scott problem");
  }
  require_assignment(problem, codebook.assign);
  const LatticeInfo& lattice = *problem.lattice();
  const bool torus = problem.topology() == Topology::Torus;
  const std::vector<double> period = lattice.period();
  const std::vector<double>* wrap_period = torus ? &period : nullptr;

  std::vector<std::vector<std::size_t>> regions(problem.num_candidates());
  for (std::size_t i = 0; i < codebook.assign.size(); ++i) {
    regions[static_cast<std::size_t>(codebook.assign[i])].push_back(i);
  }
  std::vector<double> diameter(problem.num_candidates(), 0.0);
  for (std::size_t j = 0; j < regions.size(); ++j) {
    const auto& members = regions[j];
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        diameter[j] = std::max(diameter[j], wrapped_distance(problem.cells()[members[a]].center,
                                                             problem.cells()[members[b]].center, wrap_period));
      }
    }
  }

  OverlapReport report;
  std::size_t within = 0;
  for (std::size_t i = 0; i < problem.num_cells(); ++i) {
    const auto index = lattice.cell_index(i);
    bool interior = true;
    if (!torus) {
      for (std::size_t d = 0; d < index.size(); ++d) {
        if (index[d] < interior_margin || index[d] >= lattice.cells_per_axis[d] - interior_margin) interior = false;
      }
    }
    if (!interior) continue;
    const auto j = static_cast<std::size_t>(codebook.assign[i]);
    const auto ip = log_scale_coords(ip_estimate(*problem.cells()[i].stat, *problem.prior(), *problem.config()).theta);
    const auto candidate = lattice.candidate_center(lattice.candidate_index(j));
    const double distance = wrapped_distance(candidate, ip, wrap_period);
    report.interior_cells.push_back(i);
    report.distance.push_back(distance);
    report.region_diameter.push_back(diameter[j]);
    if (distance <= diameter[j] + 1e-9) ++within;
  }
  if (!report.interior_cells.empty()) {
    report.fraction_within_one_region_diameter =
        static_cast<double>(within) / static_cast<double>(report.interior_cells.size());
  }
  return report;
}

TransportResult codebook_transport(const DiscreteProblem& problem, const Codebook& codebook,
                                   std::span<const int> shift) {
  if (!problem.lattice() || !problem.config() || !problem.prior()) {
    throw std::invalid_argument("codebook_transport: needs a discretised Neyman-Scott problem");
  }
  if (!problem.prior()->is_scale_free(*problem.config())) {
    throw std::invalid_argument("codebook_transport: lattice shifts are symmetries only under the scale-free prior");
  }
  require_assignment(problem, codebook.assign);
  const LatticeInfo& lattice = *problem.lattice();
  if (shift.size() != lattice.dims()) throw std::invalid_argument("codebook_transport: shift has the wrong dimension");
  const bool torus = problem.topology() == Topology::Torus;
  if (!torus) {
    for (std::size_t d = 1; d < shift.size(); ++d) {
      if (shift[d] != 0) {
        throw std::invalid_argument("codebook_transport: a truncated problem can only shift along log s");
      }
    }
  }

  std::vector<int> assign(problem.num_cells());
  double moved_mass = 0.0;  // cells entering plus cells leaving the box
  for (std::size_t i = 0; i < problem.num_cells(); ++i) {
    const auto index = lattice.cell_index(i);
    std::vector<int> source(index.size());
    bool entering = false;
    for (std::size_t d = 0; d < index.size(); ++d) {
      const int extent = lattice.cells_per_axis[d];
      source[d] = index[d] - shift[d];
      if (torus) {
        source[d] = wrap(source[d], extent);
      } else if (source[d] < 0 || source[d] >= extent) {
        source[d] = std::clamp(source[d], 0, extent - 1);
        entering = true;
      }
    }
    if (entering) moved_mass += problem.mass(i);
    auto cand = lattice.candidate_index(static_cast<std::size_t>(codebook.assign[lattice.cell_flat(source)]));
    for (std::size_t d = 0; d < cand.size(); ++d) {
      cand[d] += shift[d];
      if (torus) {
        cand[d] = wrap(cand[d], lattice.candidates_per_axis[d]);
      } else if (cand[d] < 0 || cand[d] >= lattice.candidates_per_axis[d]) {
        throw std::invalid_argument("codebook_transport: shifted candidate leaves the candidate lattice");
      }
    }
    assign[i] = static_cast<int>(lattice.candidate_flat(cand));
  }
  if (!torus) {
    for (std::size_t i = 0; i < problem.num_cells(); ++i) {
      const auto index = lattice.cell_index(i);
      const int target = index[0] + shift[0];
      if (target < 0 || target >= lattice.cells_per_axis[0]) moved_mass += problem.mass(i);
    }
  }

  TransportResult result;
  result.codebook = make_codebook(problem, std::move(assign));
  result.delta_total = result.codebook.cost.total - codebook.cost.total;
  result.exact = torus;
  if (!torus && moved_mass > 0.0) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < problem.num_cells(); ++i) {
      for (double p : problem.penalty_row(i)) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
    }
    // Penalty change from the moved cells, plus a continuity bound on the
    // entropy of the region-mass distribution (total variation <= moved_mass).
    const double support = 2.0 * static_cast<double>(problem.num_cells());
    result.bound = moved_mass * (hi - lo) + moved_mass * std::log(support - 1.0) + binary_entropy(moved_mass);
  }
  return result;
}

void write_problem(std::ostream& out, const DiscreteProblem& problem) {
  auto topology_name = [](Topology t) {
    switch (t) {
      case Topology::Generic:
        return "generic";
      case Topology::Box:
        return "box";
      case Topology::Torus:
        return "torus";
    }
    return "generic";
  };
  auto write_ints = [&out](const char* key, const std::vector<int>& values) {
    out << key;
    for (int v : values) out << ' ' << v;
    out << '\n';
  };
  auto write_reals = [&out](const char* key, const std::vector<double>& values) {
    out << key;
    for (double v : values) out << ' ' << fmt::format("{}", v);
    out << '\n';
  };
  out << "nsmml-problem 1\n";
  out << "topology " << topology_name(problem.topology()) << '\n';
  out << "cells " << problem.num_cells() << '\n';
  out << "candidates " << problem.num_candidates() << '\n';
  if (problem.config()) {
    out << "config " << problem.config()->num_groups() << ' ' << problem.config()->group_size() << '\n';
  }
  if (problem.prior()) out << "prior " << fmt::format("{}", problem.prior()->exponent()) << '\n';
  if (problem.lattice()) {
    const auto& l = *problem.lattice();
    write_ints("cells_per_axis", l.cells_per_axis);
    write_reals("origin", l.origin);
    write_reals("spacing", l.spacing);
    write_ints("candidates_per_axis", l.candidates_per_axis);
    write_ints("candidate_offset", l.candidate_offset);
  }
  out << "cell_table\n";
  for (std::size_t i = 0; i < problem.num_cells(); ++i) {
    const Cell& cell = problem.cells()[i];
    out << i << ' ' << fmt::format("{}", cell.mass);
    if (cell.stat) {
      out << ' ' << fmt::format("{}", cell.stat->s2);
      for (double m : cell.stat->means) out << ' ' << fmt::format("{}", m);
      for (double c : cell.center) out << ' ' << fmt::format("{}", c);
    }
    out << '\n';
  }
  out << "candidate_table\n";
  for (std::size_t j = 0; j < problem.candidates().size(); ++j) {
    const Parameter& theta = problem.candidates()[j];
    out << j << ' ' << fmt::format("{}", theta.sigma2);
    for (double m : theta.mu) out << ' ' << fmt::format("{}", m);
    out << '\n';
  }
  out << "penalty\n";
  for (std::size_t i = 0; i < problem.num_cells(); ++i) {
    const auto row = problem.penalty_row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << fmt::format("{}", row[j]);
    out << '\n';
  }
  out << "end\n";
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::istringstream next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.front() != '#') return std::istringstream(line);
    }
    fail("unexpected end of input");
  }

  std::istringstream expect(const std::string& key) {
    auto line = next();
    std::string word;
    line >> word;
    if (word != key) fail("expected '" + key + "', found '" + word + "'");
    return line;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw std::runtime_error("line " + std::to_string(line_no_) + ": " + message);
  }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

double read_real(std::istream& in, const LineReader& reader) {
  std::string token;
  if (!(in >> token)) reader.fail("missing number");
  char* end = nullptr;
  const double value = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') reader.fail("malformed number '" + token + "'");
  return value;
}

template <typename T>
T read_integer(std::istream& in, const LineReader& reader) {
  T value{};
  if (!(in >> value)) reader.fail("missing integer");
  return value;
}

}  // namespace

DiscreteProblem read_problem(std::istream& in) {
  LineReader reader(in);
  {
    auto header = reader.expect("nsmml-problem");
    if (read_integer<int>(header, reader) != 1) reader.fail("unsupported problem format version");
  }
  std::string topology_name;
  reader.expect("topology") >> topology_name;
  Topology topology = Topology::Generic;
  if (topology_name == "box") {
    topology = Topology::Box;
  } else if (topology_name == "torus") {
    topology = Topology::Torus;
  } else if (topology_name != "generic") {
    reader.fail("unknown topology '" + topology_name + "'");
  }
  auto cells_line = reader.expect("cells");
  const auto num_cells = read_integer<std::size_t>(cells_line, reader);
  auto cand_line = reader.expect("candidates");
  const auto num_candidates = read_integer<std::size_t>(cand_line, reader);

  std::optional<ProblemConfig> cfg;
  std::optional<PriorSpec> prior;
  std::optional<LatticeInfo> lattice;
  auto line = reader.next();
  std::string key;
  line >> key;
  auto read_ints = [&](std::istream& src) {
    std::vector<int> values;
    int v = 0;
    while (src >> v) values.push_back(v);
    return values;
  };
  auto read_reals = [&](std::istream& src) {
    std::vector<double> values;
    std::string token;
    while (src >> token) {
      std::istringstream one(token);
      values.push_back(read_real(one, reader));
    }
    return values;
  };
  while (key != "cell_table") {
    if (key == "config") {
      const int n = read_integer<int>(line, reader);
      const int j = read_integer<int>(line, reader);
      cfg.emplace(n, j);
    } else if (key == "prior") {
      prior.emplace(read_real(line, reader));
    } else if (key == "cells_per_axis") {
      lattice.emplace();
      lattice->cells_per_axis = read_ints(line);
    } else if (key == "origin" && lattice) {
      lattice->origin = read_reals(line);
    } else if (key == "spacing" && lattice) {
      lattice->spacing = read_reals(line);
    } else if (key == "candidates_per_axis" && lattice) {
      lattice->candidates_per_axis = read_ints(line);
    } else if (key == "candidate_offset" && lattice) {
      lattice->candidate_offset = read_ints(line);
    } else {
      reader.fail("unexpected key '" + key + "'");
    }
    line = reader.next();
    key.clear();
    line >> key;
  }

  const std::size_t groups = cfg ? static_cast<std::size_t>(cfg->num_groups()) : 0;
  std::vector<Cell> cells(num_cells);
  for (std::size_t i = 0; i < num_cells; ++i) {
    auto row = reader.next();
    if (read_integer<std::size_t>(row, reader) != i) reader.fail("cell rows out of order");
    cells[i].mass = read_real(row, reader);
    if (topology != Topology::Generic) {
      SufficientStat stat;
      stat.s2 = read_real(row, reader);
      for (std::size_t n = 0; n < groups; ++n) stat.means.push_back(read_real(row, reader));
      for (std::size_t d = 0; d <= groups; ++d) cells[i].center.push_back(read_real(row, reader));
      cells[i].stat = std::move(stat);
    }
  }
  reader.expect("candidate_table");
  std::vector<Parameter> candidates;
  if (topology != Topology::Generic) {
    for (std::size_t j = 0; j < num_candidates; ++j) {
      auto row = reader.next();
      if (read_integer<std::size_t>(row, reader) != j) reader.fail("candidate rows out of order");
      Parameter theta;
      theta.sigma2 = read_real(row, reader);
      for (std::size_t n = 0; n < groups; ++n) theta.mu.push_back(read_real(row, reader));
      candidates.push_back(std::move(theta));
    }
  }
  reader.expect("penalty");
  std::vector<double> penalty;
  penalty.reserve(num_cells * num_candidates);
  for (std::size_t i = 0; i < num_cells; ++i) {
    auto row = reader.next();
    for (std::size_t j = 0; j < num_candidates; ++j) penalty.push_back(read_real(row, reader));
  }
  reader.expect("end");

  if (topology == Topology::Generic) {
    std::vector<double> masses;
    for (const auto& c : cells) masses.push_back(c.mass);
    return DiscreteProblem(std::move(masses), num_candidates, std::move(penalty));
  }
  return DiscreteProblem(topology, std::move(cells), std::move(candidates), std::move(penalty), std::move(lattice),
                         cfg, prior);
}

void write_codebook(std::ostream& out, const Codebook& codebook) {
  out << "nsmml-codebook 1\n";
  out << "cells " << codebook.assign.size() << '\n';
  out << "cost " << fmt::format("{} {} {}", codebook.cost.entropy, codebook.cost.penalty, codebook.cost.total)
      << '\n';
  out << "assign";
  for (int a : codebook.assign) out << ' ' << a;
  out << "\nend\n";
}

Codebook read_codebook(std::istream& in) {
  LineReader reader(in);
  {
    auto header = reader.expect("nsmml-codebook");
    if (read_integer<int>(header, reader) != 1) reader.fail("unsupported code-book format version");
  }
  auto cells_line = reader.expect("cells");
  const auto cells = read_integer<std::size_t>(cells_line, reader);
  Codebook book;
  auto cost = reader.expect("cost");
  book.cost.entropy = read_real(cost, reader);
  book.cost.penalty = read_real(cost, reader);
  book.cost.total = read_real(cost, reader);
  auto assign = reader.expect("assign");
  for (std::size_t i = 0; i < cells; ++i) book.assign.push_back(read_integer<int>(assign, reader));
  reader.expect("end");
  return book;
}

}  // namespace nsmml
