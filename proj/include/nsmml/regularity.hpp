#pragma once

/** @file
 * Checks for the structural properties of an estimation problem:
 * automorphisms, transitivity, homogeneity, comprehensiveness,
 * concentration, and a constructive locality certificate.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nsmml/box.hpp"
#include "nsmml/model.hpp"

namespace nsmml {

/// Scale-translation pair acting as U(s, m) = (alpha s, alpha m + beta) on
/// observations and T(sigma, mu) = (alpha sigma, alpha mu + beta) on
/// parameters.
struct Automorphism {
  double alpha = 1.0;
  std::vector<double> beta;

  SufficientStat apply(const SufficientStat& stat) const;
  Parameter apply(const Parameter& theta) const;
  /// (this after first): x -> this(first(x)).
  Automorphism after(const Automorphism& first) const;
  Automorphism inverse() const;
  /// log |dU/dx| in (s, m) coordinates: (N + 1) log alpha.
  double log_jacobian() const;
};

struct AutomorphismReport {
  bool marginal_ok = false;
  bool likelihood_ok = false;
  double max_violation = 0.0;
  double max_marginal_violation = 0.0;
  double max_likelihood_violation = 0.0;
  /// |N + 1 - p| |log alpha|: the marginal violation implied by the closed forms.
  double predicted_marginal_violation = 0.0;
  int samples = 0;
};

/// Draws random (stat, theta) pairs and checks, in (s, m) coordinates,
///   log r(x)         = log r(U x)          + log |dU/dx|
///   log f(x | theta) = log f(U x | T theta) + log |dU/dx|.
AutomorphismReport check_automorphism(const Automorphism& aut, const PriorSpec& prior, const ProblemConfig& cfg,
                                      int samples, std::uint64_t seed, double tol);

/// (alpha, beta) with U(from) = to.
Automorphism transitivity_witness(const SufficientStat& from, const SufficientStat& to);
/// (alpha, beta) with T(from) = to.
Automorphism transitivity_witness(const Parameter& from, const Parameter& to);

/// Least-squares-free drift check: values are compared against
/// const + slope * log(scale^2) with the predicted slope (N + 1 - p) / 2.
struct DriftFit {
  double predicted_slope = 0.0;
  double intercept = 0.0;
  double max_residual = 0.0;
  double fitted_slope = 0.0;  // ordinary least squares, for reference
};

struct HomogeneityReport {
  bool is_homogeneous = false;
  std::vector<double> r_star_values;
  double spread = 0.0;
  DriftFit drift;
};

HomogeneityReport homogeneity_check(const PriorSpec& prior, const ProblemConfig& cfg,
                                    const std::vector<Parameter>& thetas, double tol);

struct ComprehensivenessReport {
  bool is_comprehensive = false;
  std::vector<double> r_opt_values;
  double spread = 0.0;
  DriftFit drift;
};

/// R_opt(x) = min over theta of R_theta(x). The minimiser is the maximum
/// likelihood estimate for every prior (r(x) does not depend on theta).
ComprehensivenessReport comprehensiveness_check(const PriorSpec& prior, const ProblemConfig& cfg,
                                                const std::vector<SufficientStat>& stats, double tol);

/// Bounding box, in (log sigma, mu / sigma) coordinates, of
/// {theta : R_theta(x) - R*_theta < epsilon}.
Box concentration_box(const SufficientStat& stat, const PriorSpec& prior, double epsilon, const ProblemConfig& cfg);

/// Smallest c >= 2 with c^{4J} / (2NJ)^{2J} >= (c+1)^7 and
/// (c+1)^N >= c^N + 2N + 2. Empty when no such c exists (N = 1, where the
/// second inequality reads c + 1 >= c + 4).
std::optional<std::int64_t> find_valid_c(const ProblemConfig& cfg);

/// The competitor set and constants that make the scale-free problem local
/// around one parameter value.
///
/// Competitors are numbered 0..k-1: the 2N shifted-mean points
/// (mu_n +/- sigma sqrt(2T)) first (plus before minus, by n), then the
/// inflated point (e sigma, mu), then the c^N grid points with
/// sigma' = sqrt(2NJ) sigma / c, in row-major order over the per-coordinate
/// segment centres. The grid part is never materialised.
class LocalityCertificate {
 public:
  LocalityCertificate(Parameter theta, const ProblemConfig& cfg, std::int64_t c);

  const Parameter& theta() const { return theta_; }
  const ProblemConfig& config() const { return cfg_; }
  std::int64_t c() const { return c_; }
  /// k = 2N + 1 + c^N (as a double; it overflows integers quickly).
  double competitor_count() const;
  double margin() const { return margin_; }  // T = N log(c + 1)
  /// Lower bound on s / sigma outside of which the inflated competitor wins.
  double upper_ratio() const { return upper_ratio_; }  // Delta
  /// Upper bound on s / sigma below which a grid competitor wins.
  double lower_ratio() const { return lower_ratio_; }  // Delta'
  double v0_bound() const;

  /// The exempt region {Delta' <= s / sigma <= Delta, |m_n - mu_n| <= sigma sqrt(2T)}
  /// as a box in (log s, m) coordinates.
  Box exempt_box_native() const;
  /// Bounding box of the exempt region in (log s, m / s) coordinates.
  Box exempt_box() const;
  bool in_exempt_region(const SufficientStat& stat) const;

  Parameter competitor(std::int64_t index) const;
  /// max_i log f(x | theta_i). The grid part uses the grid point nearest to
  /// m in every coordinate, which is the exact maximiser over the grid.
  double best_competitor_log_likelihood(const SufficientStat& stat) const;
  /// max_i log f(x | theta_i) - log f(x | theta) - T.
  double excess_over_margin(const SufficientStat& stat) const;

 private:
  Parameter theta_;
  ProblemConfig cfg_;
  std::int64_t c_;
  double margin_;
  double upper_ratio_;
  double lower_ratio_;
  double sigma_;
  double shift_;  // sigma sqrt(2T)
};

struct LocalityGrid {
  int points_per_axis = 24;
  /// Extra range beyond the exempt region on the log(s / sigma) axis.
  double log_ratio_padding = 3.0;
  /// Mean offsets are sampled on [-f, f] * sigma sqrt(2T).
  double offset_factor = 3.0;
};

struct LocalityReport {
  bool ok = false;
  std::int64_t exterior_points = 0;
  std::int64_t exempt_points = 0;
  double worst_excess = 0.0;  // min over exterior points of excess_over_margin
  SufficientStat witness;     // where worst_excess is attained
  double v0_bound = 0.0;
};

/// Checks the margin inequality on every grid point outside the exempt
/// region. Grid points are cell centres, so none lies on the region boundary.
LocalityReport verify_locality(const LocalityCertificate& cert, const LocalityGrid& grid);

}  // namespace nsmml
