#include "nsmml/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "nsmml/detail/parallel.hpp"
#include "nsmml/detail/search.hpp"
#include "nsmml/estimators.hpp"
#include "nsmml/random.hpp"

namespace nsmml {

namespace {

double spread_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return *hi - *lo;
}

DriftFit fit_drift(const std::vector<double>& log_scale2, const std::vector<double>& values, double slope) {
  DriftFit fit;
  fit.predicted_slope = slope;
  const double count = static_cast<double>(values.size());
  double intercept = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) intercept += values[i] - slope * log_scale2[i];
  fit.intercept = intercept / count;
  for (std::size_t i = 0; i < values.size(); ++i) {
    fit.max_residual = std::max(fit.max_residual, std::abs(values[i] - fit.intercept - slope * log_scale2[i]));
  }
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    mean_x += log_scale2[i] / count;
    mean_y += values[i] / count;
  }
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sxx += (log_scale2[i] - mean_x) * (log_scale2[i] - mean_x);
    sxy += (log_scale2[i] - mean_x) * (values[i] - mean_y);
  }
  fit.fitted_slope = sxx > 0.0 ? sxy / sxx : 0.0;
  return fit;
}

SufficientStat random_stat(Rng& rng, int n) {
  SufficientStat stat;
  stat.s2 = std::exp(rng.uniform(-2.0, 2.0));
  for (int i = 0; i < n; ++i) stat.means.push_back(rng.normal(0.0, 2.0));
  return stat;
}

Parameter random_parameter(Rng& rng, int n) {
  Parameter theta;
  theta.sigma2 = std::exp(rng.uniform(-2.0, 2.0));
  for (int i = 0; i < n; ++i) theta.mu.push_back(rng.normal(0.0, 2.0));
  return theta;
}

}  // namespace

SufficientStat Automorphism::apply(const SufficientStat& stat) const {
  if (beta.size() != stat.means.size()) throw std::invalid_argument("Automorphism: dimension mismatch");
  SufficientStat out;
  out.s2 = alpha * alpha * stat.s2;
  for (std::size_t n = 0; n < beta.size(); ++n) out.means.push_back(alpha * stat.means[n] + beta[n]);
  return out;
}

Parameter Automorphism::apply(const Parameter& theta) const {
  if (beta.size() != theta.mu.size()) throw std::invalid_argument("Automorphism: dimension mismatch");
  Parameter out;
  out.sigma2 = alpha * alpha * theta.sigma2;
  for (std::size_t n = 0; n < beta.size(); ++n) out.mu.push_back(alpha * theta.mu[n] + beta[n]);
  return out;
}

Automorphism Automorphism::after(const Automorphism& first) const {
  Automorphism out{alpha * first.alpha, {}};
  for (std::size_t n = 0; n < beta.size(); ++n) out.beta.push_back(alpha * first.beta[n] + beta[n]);
  return out;
}

Automorphism Automorphism::inverse() const {
  Automorphism out{1.0 / alpha, {}};
  for (double b : beta) out.beta.push_back(-b / alpha);
  return out;
}

double Automorphism::log_jacobian() const { return (static_cast<double>(beta.size()) + 1.0) * std::log(alpha); }

AutomorphismReport check_automorphism(const Automorphism& aut, const PriorSpec& prior, const ProblemConfig& cfg,
                                      int samples, std::uint64_t seed, double tol) {
  if (samples < 1) throw std::invalid_argument("check_automorphism: samples must be positive");
  if (!(aut.alpha > 0.0)) throw std::invalid_argument("check_automorphism: alpha must be positive");
  if (aut.beta.size() != static_cast<std::size_t>(cfg.num_groups())) {
    throw std::invalid_argument("check_automorphism: beta has the wrong length");
  }
  AutomorphismReport report;
  report.samples = samples;
  report.predicted_marginal_violation =
      std::abs(cfg.num_groups() + 1.0 - prior.exponent()) * std::abs(std::log(aut.alpha));
  Rng rng(seed, {0xa07});
  const double log_jac = aut.log_jacobian();
  for (int i = 0; i < samples; ++i) {
    const SufficientStat stat = random_stat(rng, cfg.num_groups());
    const Parameter theta = random_parameter(rng, cfg.num_groups());
    const SufficientStat moved = aut.apply(stat);
    const Parameter moved_theta = aut.apply(theta);
    const double marginal_gap = log_marginal_stat_density(stat, prior, cfg) -
                                log_marginal_stat_density(moved, prior, cfg) - log_jac;
    const double likelihood_gap = log_likelihood_stat_density(stat, theta, cfg) -
                                  log_likelihood_stat_density(moved, moved_theta, cfg) - log_jac;
    report.max_marginal_violation = std::max(report.max_marginal_violation, std::abs(marginal_gap));
    report.max_likelihood_violation = std::max(report.max_likelihood_violation, std::abs(likelihood_gap));
  }
  report.max_violation = std::max(report.max_marginal_violation, report.max_likelihood_violation);
  report.marginal_ok = report.max_marginal_violation < tol;
  report.likelihood_ok = report.max_likelihood_violation < tol;
  return report;
}

Automorphism transitivity_witness(const SufficientStat& from, const SufficientStat& to) {
  if (!(from.s2 > 0.0)) throw std::invalid_argument("transitivity_witness: source s2 must be positive");
  if (!(to.s2 > 0.0)) throw std::invalid_argument("transitivity_witness: target s2 must be positive");
  if (from.means.size() != to.means.size()) throw std::invalid_argument("transitivity_witness: dimension mismatch");
  Automorphism aut{std::sqrt(to.s2 / from.s2), {}};
  for (std::size_t n = 0; n < from.means.size(); ++n) aut.beta.push_back(to.means[n] - aut.alpha * from.means[n]);
  return aut;
}

Automorphism transitivity_witness(const Parameter& from, const Parameter& to) {
  if (!(from.sigma2 > 0.0)) throw std::invalid_argument("transitivity_witness: source sigma2 must be positive");
  if (!(to.sigma2 > 0.0)) throw std::invalid_argument("transitivity_witness: target sigma2 must be positive");
  if (from.mu.size() != to.mu.size()) throw std::invalid_argument("transitivity_witness: dimension mismatch");
  Automorphism aut{std::sqrt(to.sigma2 / from.sigma2), {}};
  for (std::size_t n = 0; n < from.mu.size(); ++n) aut.beta.push_back(to.mu[n] - aut.alpha * from.mu[n]);
  return aut;
}

HomogeneityReport homogeneity_check(const PriorSpec& prior, const ProblemConfig& cfg,
                                    const std::vector<Parameter>& thetas, double tol) {
  if (thetas.empty()) throw std::invalid_argument("homogeneity_check: empty sample");
  HomogeneityReport report;
  std::vector<double> log_scale2;
  for (const auto& theta : thetas) {
    report.r_star_values.push_back(ideal_point_penalty(theta, prior, cfg));
    log_scale2.push_back(std::log(theta.sigma2));
  }
  report.spread = spread_of(report.r_star_values);
  report.is_homogeneous = report.spread < tol;
  report.drift = fit_drift(log_scale2, report.r_star_values, 0.5 * (cfg.num_groups() + 1.0 - prior.exponent()));
  return report;
}

ComprehensivenessReport comprehensiveness_check(const PriorSpec& prior, const ProblemConfig& cfg,
                                                const std::vector<SufficientStat>& stats, double tol) {
  if (stats.empty()) throw std::invalid_argument("comprehensiveness_check: empty sample");
  ComprehensivenessReport report;
  std::vector<double> log_scale2;
  for (const auto& stat : stats) {
    report.r_opt_values.push_back(code_penalty(ml_estimate(stat, cfg).theta, stat, prior, cfg));
    log_scale2.push_back(std::log(stat.s2));
  }
  report.spread = spread_of(report.r_opt_values);
  report.is_comprehensive = report.spread < tol;
  report.drift = fit_drift(log_scale2, report.r_opt_values, 0.5 * (cfg.num_groups() + 1.0 - prior.exponent()));
  return report;
}

Box concentration_box(const SufficientStat& stat, const PriorSpec& prior, double epsilon, const ProblemConfig& cfg) {
  require_valid(stat, cfg);
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("concentration_box: epsilon must be positive and finite");
  }
  // Members satisfy a = u - t and b_n = v_n e^t - w_n with |w| <= rho(t).
  const PenaltyShape shape(prior, cfg);
  const auto [t_lo, t_hi] = shape.log_ratio_range(epsilon);
  const auto point = log_scale_coords(stat);
  Box box;
  box.lo.push_back(point[0] - t_hi);
  box.hi.push_back(point[0] - t_lo);
  for (std::size_t n = 1; n < point.size(); ++n) {
    const double v = point[n];
    const double hi = detail::max_over(
        [&](double t) { return v * std::exp(t) + shape.offset_radius(t, epsilon); }, t_lo, t_hi);
    const double lo = -detail::max_over(
        [&](double t) { return -(v * std::exp(t) - shape.offset_radius(t, epsilon)); }, t_lo, t_hi);
    box.lo.push_back(lo);
    box.hi.push_back(hi);
  }
  return box;
}

std::optional<std::int64_t> find_valid_c(const ProblemConfig& cfg) {
  const double n = cfg.num_groups();
  const double j = cfg.group_size();
  const double log_scale = 2.0 * j * std::log(2.0 * n * j);
  auto degree_ok = [&](std::int64_t c) {
    const double cd = static_cast<double>(c);
    return 4.0 * j * std::log(cd) - log_scale >= 7.0 * std::log(cd + 1.0);
  };
  auto count_ok = [&](std::int64_t c) {
    // (c+1)^N - c^N >= 2N + 2, i.e. N log(1 + 1/c) >= log(1 + (2N+2) / c^N).
    const double cd = static_cast<double>(c);
    return n * std::log1p(1.0 / cd) >= std::log1p((2.0 * n + 2.0) * std::exp(-n * std::log(cd)));
  };
  if (cfg.num_groups() == 1) return std::nullopt;
  // Both predicates are monotone in c (4J > 7 and (c+1)^N - c^N grows), so
  // gallop to a feasible c and bisect back to the smallest one.
  auto feasible = [&](std::int64_t c) { return degree_ok(c) && count_ok(c); };
  std::int64_t hi = 2;
  while (!feasible(hi)) {
    if (hi > (std::int64_t{1} << 52)) return std::nullopt;
    hi *= 2;
  }
  if (hi == 2) return hi;
  std::int64_t lo = hi / 2;  // infeasible
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (feasible(mid) ? hi : lo) = mid;
  }
  return hi;
}

LocalityCertificate::LocalityCertificate(Parameter theta, const ProblemConfig& cfg, std::int64_t c)
    : theta_(std::move(theta)), cfg_(cfg), c_(c) {
  require_valid(theta_, cfg_);
  const double nj = cfg_.total_observations();
  const double cd = static_cast<double>(c);
  if (c < 1) throw std::invalid_argument("LocalityCertificate: c must be positive");
  if (cd * cd <= 2.0 * nj) {
    throw std::invalid_argument("LocalityCertificate: c^2 must exceed 2NJ for the small-scale bound");
  }
  margin_ = cfg_.num_groups() * std::log(cd + 1.0);
  // -NJ + (1 - e^-2) (NJ/2) Delta^2 = T
  upper_ratio_ = std::sqrt((margin_ + nj) / ((1.0 - std::exp(-2.0)) * 0.5 * nj));
  // (c^2 / 2NJ - 1) (NJ/2) Delta'^2 = T / 4
  lower_ratio_ = std::sqrt(0.25 * margin_ / ((cd * cd / (2.0 * nj) - 1.0) * 0.5 * nj));
  sigma_ = std::sqrt(theta_.sigma2);
  shift_ = sigma_ * std::sqrt(2.0 * margin_);
}

double LocalityCertificate::competitor_count() const {
  return 2.0 * cfg_.num_groups() + 1.0 + std::pow(static_cast<double>(c_), cfg_.num_groups());
}

double LocalityCertificate::v0_bound() const {
  const double n = cfg_.num_groups();
  return std::pow(2.0 * std::sqrt(2.0 * margin_), n) * std::log(upper_ratio_ / lower_ratio_) /
         std::pow(lower_ratio_, n);
}

Box LocalityCertificate::exempt_box_native() const {
  Box box;
  box.lo.push_back(std::log(sigma_ * lower_ratio_));
  box.hi.push_back(std::log(sigma_ * upper_ratio_));
  for (double mu : theta_.mu) {
    box.lo.push_back(mu - shift_);
    box.hi.push_back(mu + shift_);
  }
  return box;
}

Box LocalityCertificate::exempt_box() const {
  Box box;
  const double s_lo = sigma_ * lower_ratio_;
  const double s_hi = sigma_ * upper_ratio_;
  box.lo.push_back(std::log(s_lo));
  box.hi.push_back(std::log(s_hi));
  for (double mu : theta_.mu) {
    const double m_lo = mu - shift_;
    const double m_hi = mu + shift_;
    box.lo.push_back(std::min(m_lo / s_lo, m_lo / s_hi));
    box.hi.push_back(std::max(m_hi / s_lo, m_hi / s_hi));
  }
  return box;
}

bool LocalityCertificate::in_exempt_region(const SufficientStat& stat) const {
  const double ratio = std::sqrt(stat.s2) / sigma_;
  if (ratio < lower_ratio_ || ratio > upper_ratio_) return false;
  for (std::size_t n = 0; n < stat.means.size(); ++n) {
    if (std::abs(stat.means[n] - theta_.mu[n]) > shift_) return false;
  }
  return true;
}

Parameter LocalityCertificate::competitor(std::int64_t index) const {
  const std::int64_t groups = cfg_.num_groups();
  if (index < 0 || static_cast<double>(index) >= competitor_count()) {
    throw std::out_of_range("LocalityCertificate::competitor: index out of range");
  }
  if (index < 2 * groups) {
    Parameter out = theta_;
    const auto n = static_cast<std::size_t>(index / 2);
    out.mu[n] += (index % 2 == 0) ? shift_ : -shift_;
    return out;
  }
  if (index == 2 * groups) {
    return Parameter{std::numbers::e * std::numbers::e * theta_.sigma2, theta_.mu};
  }
  std::int64_t grid = index - 2 * groups - 1;
  const double segment = 2.0 * shift_ / static_cast<double>(c_);
  const double grid_sigma = std::sqrt(2.0 * cfg_.total_observations()) * sigma_ / static_cast<double>(c_);
  Parameter out{grid_sigma * grid_sigma, theta_.mu};
  for (std::int64_t n = groups - 1; n >= 0; --n) {
    const std::int64_t digit = grid % c_;
    grid /= c_;
    const auto un = static_cast<std::size_t>(n);
    out.mu[un] = theta_.mu[un] - shift_ + (static_cast<double>(digit) + 0.5) * segment;
  }
  return out;
}

double LocalityCertificate::best_competitor_log_likelihood(const SufficientStat& stat) const {
  const std::int64_t groups = cfg_.num_groups();
  double best = -std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i <= 2 * groups; ++i) best = std::max(best, log_likelihood(stat, competitor(i), cfg_));
  const double segment = 2.0 * shift_ / static_cast<double>(c_);
  const double grid_sigma = std::sqrt(2.0 * cfg_.total_observations()) * sigma_ / static_cast<double>(c_);
  Parameter nearest{grid_sigma * grid_sigma, theta_.mu};
  for (std::size_t n = 0; n < nearest.mu.size(); ++n) {
    const double lo = theta_.mu[n] - shift_;
    auto cell = static_cast<std::int64_t>(std::floor((stat.means[n] - lo) / segment));
    cell = std::clamp<std::int64_t>(cell, 0, c_ - 1);
    nearest.mu[n] = lo + (static_cast<double>(cell) + 0.5) * segment;
  }
  return std::max(best, log_likelihood(stat, nearest, cfg_));
}

double LocalityCertificate::excess_over_margin(const SufficientStat& stat) const {
  return best_competitor_log_likelihood(stat) - log_likelihood(stat, theta_, cfg_) - margin_;
}

LocalityReport verify_locality(const LocalityCertificate& cert, const LocalityGrid& grid) {
  if (grid.points_per_axis < 2) throw std::invalid_argument("verify_locality: need at least 2 points per axis");
  const ProblemConfig& cfg = cert.config();
  const auto dims = static_cast<std::size_t>(cfg.num_groups()) + 1;
  const auto per_axis = static_cast<std::size_t>(grid.points_per_axis);
  std::size_t total = 1;
  for (std::size_t d = 0; d < dims; ++d) total *= per_axis;

  const double sigma = std::sqrt(cert.theta().sigma2);
  const double ratio_lo = std::log(cert.lower_ratio()) - grid.log_ratio_padding;
  const double ratio_hi = std::log(cert.upper_ratio()) + grid.log_ratio_padding;
  const double offset_span = grid.offset_factor * std::sqrt(2.0 * cert.margin());

  auto point_at = [&](std::size_t index) {
    SufficientStat stat;
    stat.means.resize(dims - 1);
    for (std::size_t d = dims; d-- > 0;) {
      const double frac = (static_cast<double>(index % per_axis) + 0.5) / static_cast<double>(per_axis);
      index /= per_axis;
      if (d == 0) {
        const double s = sigma * std::exp(ratio_lo + frac * (ratio_hi - ratio_lo));
        stat.s2 = s * s;
      } else {
        stat.means[d - 1] = cert.theta().mu[d - 1] + sigma * (-offset_span + frac * 2.0 * offset_span);
      }
    }
    return stat;
  };

  std::vector<double> excess(total, std::numeric_limits<double>::infinity());
  std::vector<char> exempt(total, 0);
  detail::parallel_for(total, [&](std::size_t i) {
    const SufficientStat stat = point_at(i);
    if (cert.in_exempt_region(stat)) {
      exempt[i] = 1;
      return;
    }
    excess[i] = cert.excess_over_margin(stat);
  });

  LocalityReport report;
  report.v0_bound = cert.v0_bound();
  report.worst_excess = std::numeric_limits<double>::infinity();
  std::size_t worst = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (exempt[i]) {
      ++report.exempt_points;
      continue;
    }
    ++report.exterior_points;
    if (excess[i] < report.worst_excess) {
      report.worst_excess = excess[i];
      worst = i;
    }
  }
  report.witness = point_at(worst);
  report.ok = report.exterior_points > 0 && report.worst_excess > 0.0;
  return report;
}

}  // namespace nsmml
