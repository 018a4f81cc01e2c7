#pragma once

/** @file
 * Closed-form probabilistic core of the Neyman-Scott problem.
 *
 * Observations are an N x J matrix x_nj ~ N(mu_n, sigma^2). The sufficient
 * statistic is (m, s^2) with m_n the group means and s^2 the pooled
 * within-group variance (divisor NJ).
 *
 * Priors belong to the power family h(sigma, mu) dsigma dmu = sigma^(-p), with
 * the proportionality constant fixed to exactly 1. p = 1 is the Wallace prior
 * and p = N + 1 the scale-free (Jeffreys) prior.
 *
 * All densities are returned as natural logarithms. Unless a function name
 * says otherwise, densities are taken with respect to Lebesgue measure on the
 * raw observation space R^(NJ); the *_stat_density variants are with respect
 * to Lebesgue measure on the (s, m) coordinates.
 */

#include <cstddef>
#include <span>
#include <vector>

namespace nsmml {

/// Shape of a Neyman-Scott problem: N groups of J observations each.
class ProblemConfig {
 public:
  /// Throws std::invalid_argument unless num_groups >= 1 and group_size >= 2.
  ProblemConfig(int num_groups, int group_size);

  int num_groups() const { return num_groups_; }
  int group_size() const { return group_size_; }

  /// NJ
  int total_observations() const { return num_groups_ * group_size_; }
  /// N(J-1), the number of within-group degrees of freedom.
  int residual_dof() const { return num_groups_ * (group_size_ - 1); }

  bool operator==(const ProblemConfig&) const = default;

 private:
  int num_groups_;
  int group_size_;
};

/// Row-major N x J observation matrix.
class RawData {
 public:
  RawData(int rows, int cols, std::vector<double> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double operator()(int n, int j) const { return values_[static_cast<std::size_t>(n * cols_ + j)]; }
  std::span<const double> row(int n) const {
    return {values_.data() + static_cast<std::size_t>(n * cols_), static_cast<std::size_t>(cols_)};
  }
  std::span<const double> values() const { return values_; }

 private:
  int rows_;
  int cols_;
  std::vector<double> values_;
};

struct SufficientStat {
  std::vector<double> means;  // m
  double s2 = 0.0;            // pooled within-group variance
};

struct Parameter {
  double sigma2 = 1.0;
  std::vector<double> mu;
};

/// Power prior h(sigma, mu) = sigma^(-exponent).
class PriorSpec {
 public:
  /// Throws std::invalid_argument for exponent < 1 or non-finite values.
  explicit PriorSpec(double exponent);

  static PriorSpec wallace() { return PriorSpec(1.0); }
  static PriorSpec scale_free(const ProblemConfig& cfg) { return PriorSpec(cfg.num_groups() + 1.0); }

  double exponent() const { return exponent_; }
  bool is_wallace() const { return exponent_ == 1.0; }
  bool is_scale_free(const ProblemConfig& cfg) const { return exponent_ == cfg.num_groups() + 1.0; }

  bool operator==(const PriorSpec&) const = default;

 private:
  double exponent_;
};

SufficientStat sufficient_stats(const RawData& data, const ProblemConfig& cfg);

/// log f(x | sigma^2, mu), evaluated through the sufficient statistic.
double log_likelihood(const SufficientStat& stat, const Parameter& theta, const ProblemConfig& cfg);

/// log r(x) = log of the integral of h * f over (sigma, mu).
///
/// With k = (N(J-1) + p - 1) / 2 the closed form is
///   r = (2 pi)^(-N(J-1)/2) J^(-N/2) (1/2) (NJ s^2 / 2)^(-k) Gamma(k).
double log_marginal(const SufficientStat& stat, const PriorSpec& prior, const ProblemConfig& cfg);

/// R_theta(x) = log r(x) - log f(x | theta).
double code_penalty(const Parameter& theta, const SufficientStat& stat, const PriorSpec& prior,
                    const ProblemConfig& cfg);

/// Half the log-determinant of the Fisher information in (sigma^2, mu)
/// coordinates, F = diag(NJ / (2 sigma^4), J / sigma^2, ..., J / sigma^2).
///
/// The Jeffreys density in these coordinates is proportional to
/// sigma^(-(N+2)); as a density in sigma it is sigma^(-(N+1)), i.e. the
/// scale-free prior.
double fisher_log_sqrt_det(const Parameter& theta, const ProblemConfig& cfg);

/// log of the density of (s, m) induced by a unit density on R^(NJ) at the
/// given s^2: the change of variables x -> (m, residual) plus polar
/// coordinates on the N(J-1)-dimensional residual sphere of radius sqrt(NJ) s.
double log_stat_jacobian(double s2, const ProblemConfig& cfg);

/// Marginal density in (s, m) coordinates. Equals C_p * s^(-p).
double log_marginal_stat_density(const SufficientStat& stat, const PriorSpec& prior, const ProblemConfig& cfg);

/// Likelihood density in (s, m) coordinates.
double log_likelihood_stat_density(const SufficientStat& stat, const Parameter& theta, const ProblemConfig& cfg);

// Log-scale coordinates. Observations map to (log s, m / s) and parameters to
// (log sigma, mu / sigma); both are vectors of length N + 1. In these
// coordinates the scale-free marginal is uniform and pure rescalings act as
// translations along the first axis.

std::vector<double> log_scale_coords(const SufficientStat& stat);
std::vector<double> log_scale_coords(const Parameter& theta);
SufficientStat stat_from_log_scale(std::span<const double> point);
Parameter parameter_from_log_scale(std::span<const double> point);

/// Throws std::invalid_argument if the statistic is not usable (wrong length,
/// s2 not strictly positive, non-finite entries).
void require_valid(const SufficientStat& stat, const ProblemConfig& cfg);
void require_valid(const Parameter& theta, const ProblemConfig& cfg);

}  // namespace nsmml
