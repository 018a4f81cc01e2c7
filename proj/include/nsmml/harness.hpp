#pragma once

/** @file
 * Simulation and estimator sweeps.
 *
 * Trial t of group count N draws from the stream Rng(seed, {N, t}); true
 * means (when random) are drawn first, then the observations in row-major
 * order. Any row of a sweep can therefore be recomputed from the seed alone.
 */

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nsmml/model.hpp"
#include "nsmml/random.hpp"

namespace nsmml {

/// x_nj = mu_n + sigma * z_nj, drawn in row-major order from `rng`.
RawData simulate(const ProblemConfig& cfg, double sigma2_true, const std::vector<double>& mu_true, Rng& rng);
RawData simulate(const ProblemConfig& cfg, double sigma2_true, const std::vector<double>& mu_true,
                 std::uint64_t seed);

/// How true means are chosen per trial.
struct MuLaw {
  enum class Kind { Normal, Zero, Fixed };
  Kind kind = Kind::Normal;
  std::vector<double> values;  // Fixed: recycled to length N

  /// Normal: mu_n = sigma_true * z_n, drawn from rng.
  std::vector<double> draw(int num_groups, double sigma2_true, Rng& rng) const;
  std::string describe() const;
};

/// A prior as written in a sweep: its exponent may depend on N.
struct PriorChoice {
  enum class Kind { Wallace, ScaleFree, Exponent };
  Kind kind = Kind::Wallace;
  double exponent = 1.0;  // Exponent only

  PriorSpec resolve(const ProblemConfig& cfg) const;
  std::string describe() const;
  static PriorChoice parse(std::string_view text);
};

enum class EstimatorKind { ML, IP, WF, Marginalized };

std::string_view estimator_name(EstimatorKind kind);
EstimatorKind parse_estimator(std::string_view text);
/// IP and WF depend on the prior; ML and the marginalised estimator do not.
bool estimator_uses_prior(EstimatorKind kind);

struct SweepSpec {
  int group_size = 2;  // J
  std::vector<int> num_groups;  // N values, strictly increasing
  int trials = 1;
  std::uint64_t trial_offset = 0;  // first trial index; lets a sweep be split across runs
  double sigma2_true = 1.0;
  MuLaw mu_law;
  std::vector<EstimatorKind> estimators{EstimatorKind::ML, EstimatorKind::IP, EstimatorKind::WF,
                                        EstimatorKind::Marginalized};
  std::vector<PriorChoice> priors{PriorChoice{PriorChoice::Kind::Wallace},
                                  PriorChoice{PriorChoice::Kind::ScaleFree}};
  std::uint64_t seed = 0;
};

/// Throws std::invalid_argument describing the first problem found.
void require_valid(const SweepSpec& spec);

struct SweepRow {
  int num_groups = 0;
  EstimatorKind estimator = EstimatorKind::ML;
  std::optional<double> prior_exponent;  // empty when the estimator ignores the prior
  double mean_ratio = 0.0;
  double sd_ratio = 0.0;  // sample standard deviation; 0 for a single trial
  int trials = 0;
};

/// Rows ordered by N, then estimator as listed, then prior as listed.
std::vector<SweepRow> run_sweep(const SweepSpec& spec);

/// sigma^2 estimate of one estimator on one statistic.
double estimate_sigma2(EstimatorKind kind, const SufficientStat& stat, const std::optional<PriorSpec>& prior,
                       const ProblemConfig& cfg);

/// Plain-text `key = value` configuration; `#` starts a comment. Keys: J,
/// N_list, trials, trial_offset, sigma2_true, mu_law, estimators, priors,
/// seed. Throws std::runtime_error with the offending line.
SweepSpec parse_sweep_config(std::istream& in);
SweepSpec parse_sweep_config_file(const std::string& path);

inline constexpr std::string_view kSweepCsvHeader = "N,estimator,prior_p,mean_ratio,sd_ratio,trials";

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_sweep_json(std::ostream& out, const SweepSpec& spec, const std::vector<SweepRow>& rows);

}  // namespace nsmml
