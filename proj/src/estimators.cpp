#include "nsmml/estimators.hpp"

#include <boost/math/tools/minima.hpp>

#include "nsmml/detail/search.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace nsmml {

using detail::max_over;
using detail::root_between;

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

// Denominator N(J-1) + p - 1 shared by the IP and WF closed forms.
double stationary_denominator(const PriorSpec& prior, const ProblemConfig& cfg) {
  return cfg.residual_dof() + prior.exponent() - 1.0;
}

}  // namespace

std::string_view method_name(Method method) {
  switch (method) {
    case Method::MaximumLikelihood:
      return "ML";
    case Method::IdealPoint:
      return "IP";
    case Method::WallaceFreeman:
      return "WF";
    case Method::MarginalizedSigma2:
      return "MARGINALIZED";
  }
  return "?";
}

PenaltyShape::PenaltyShape(const PriorSpec& prior, const ProblemConfig& cfg)
    : nj_(cfg.total_observations()),
      group_size_(cfg.group_size()),
      shape_(0.5 * stationary_denominator(prior, cfg)),
      t_star_(0.5 * std::log(2.0 * shape_ / nj_)) {}

double PenaltyShape::scale_excess(double log_ratio) const {
  // expm1 keeps precision near the minimum.
  const double growth = std::exp(2.0 * t_star_) * std::expm1(2.0 * (log_ratio - t_star_));
  return 0.5 * nj_ * growth - 2.0 * shape_ * (log_ratio - t_star_);
}

std::pair<double, double> PenaltyShape::log_ratio_range(double epsilon) const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("log_ratio_range: epsilon must be positive");
  auto fn = [&](double t) { return scale_excess(t) - epsilon; };
  double step = 1.0;
  while (fn(t_star_ - step) < 0.0) step *= 2.0;
  const double lower = root_between(fn, t_star_ - step, t_star_);
  step = 1.0;
  while (fn(t_star_ + step) < 0.0) step *= 2.0;
  const double upper = root_between(fn, t_star_, t_star_ + step);
  return {lower, upper};
}

double PenaltyShape::offset_radius(double log_ratio, double epsilon) const {
  const double room = epsilon - scale_excess(log_ratio);
  return room > 0.0 ? std::sqrt(2.0 * room / group_size_) : 0.0;
}

Estimate ml_estimate(const SufficientStat& stat, const ProblemConfig& cfg) {
  require_valid(stat, cfg);
  return {Parameter{stat.s2, stat.means}, Method::MaximumLikelihood, std::nullopt};
}

Estimate ip_estimate(const SufficientStat& stat, const PriorSpec& prior, const ProblemConfig& cfg) {
  require_valid(stat, cfg);
  const double sigma2 = stat.s2 * (cfg.total_observations() / stationary_denominator(prior, cfg));
  return {Parameter{sigma2, stat.means}, Method::IdealPoint, prior};
}

SufficientStat ip_reverse(const Parameter& theta, const PriorSpec& prior, const ProblemConfig& cfg) {
  require_valid(theta, cfg);
  return {theta.mu, theta.sigma2 * (stationary_denominator(prior, cfg) / cfg.total_observations())};
}

double ideal_point_penalty(const Parameter& theta, const PriorSpec& prior, const ProblemConfig& cfg) {
  return code_penalty(theta, ip_reverse(theta, prior, cfg), prior, cfg);
}

IdealGroupRegion::IdealGroupRegion(Parameter center, PriorSpec prior, double epsilon, ProblemConfig cfg)
    : center_(std::move(center)), prior_(prior), epsilon_(epsilon), cfg_(cfg) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("ideal_group: epsilon must be positive and finite");
  }
  r_star_ = ideal_point_penalty(center_, prior_, cfg_);

  // Members satisfy u = a + t and v_n = (b_n + w_n) e^{-t} with |w| <= rho(t).
  const PenaltyShape shape(prior_, cfg_);
  const auto [t_lo, t_hi] = shape.log_ratio_range(epsilon_);
  const auto anchor = log_scale_coords(center_);
  const double a = anchor[0];
  box_.lo.push_back(a + t_lo);
  box_.hi.push_back(a + t_hi);
  for (std::size_t n = 1; n < anchor.size(); ++n) {
    const double b = anchor[n];
    const double hi =
        max_over([&](double t) { return (b + shape.offset_radius(t, epsilon_)) * std::exp(-t); }, t_lo, t_hi);
    const double lo =
        -max_over([&](double t) { return -(b - shape.offset_radius(t, epsilon_)) * std::exp(-t); }, t_lo, t_hi);
    box_.lo.push_back(lo);
    box_.hi.push_back(hi);
  }
}

bool IdealGroupRegion::contains(const SufficientStat& stat) const {
  return code_penalty(center_, stat, prior_, cfg_) <= threshold();
}

IdealGroupRegion ideal_group(const Parameter& theta, const PriorSpec& prior, double epsilon,
                             const ProblemConfig& cfg) {
  require_valid(theta, cfg);
  return IdealGroupRegion(theta, prior, epsilon, cfg);
}

double wf_objective(const Parameter& theta, const SufficientStat& stat, const PriorSpec& prior,
                    const ProblemConfig& cfg) {
  const double log_prior = -0.5 * (prior.exponent() + 1.0) * std::log(theta.sigma2) - std::numbers::ln2;
  return log_prior + log_likelihood(stat, theta, cfg) - fisher_log_sqrt_det(theta, cfg);
}

Estimate wf_estimate(const SufficientStat& stat, const PriorSpec& prior, const ProblemConfig& cfg) {
  require_valid(stat, cfg);
  // d/d(sigma^2) of the objective at mu = m vanishes where
  //   NJ s^2 / sigma^2 = NJ + p + 1 - (N + 2).
  const double sigma2 = stat.s2 * (cfg.total_observations() / stationary_denominator(prior, cfg));
  return {Parameter{sigma2, stat.means}, Method::WallaceFreeman, prior};
}

NumericEstimate wf_estimate_numeric(const SufficientStat& stat, const PriorSpec& prior, const ProblemConfig& cfg) {
  require_valid(stat, cfg);
  const double centre = std::log(stat.s2);
  const double lo = centre - 20.0;
  const double hi = centre + 20.0;
  constexpr std::uintmax_t kMaxIter = 500;
  std::uintmax_t iter = kMaxIter;
  Parameter theta{1.0, stat.means};
  const auto [x, value] = boost::math::tools::brent_find_minima(
      [&](double log_sigma2) {
        theta.sigma2 = std::exp(log_sigma2);
        return -wf_objective(theta, stat, prior, cfg);
      },
      lo, hi, std::numeric_limits<double>::digits / 2, iter);
  NumericEstimate out;
  out.sigma2 = std::exp(x);
  out.iterations = static_cast<int>(iter);
  out.converged = iter < kMaxIter && x > lo + 1e-6 && x < hi - 1e-6;
  return out;
}

double marginalized_log_likelihood(double sigma2, const SufficientStat& stat, const ProblemConfig& cfg) {
  require_valid(stat, cfg);
  if (!(sigma2 > 0.0)) throw std::invalid_argument("marginalized_log_likelihood: sigma2 must be positive");
  const double dof = cfg.residual_dof();
  return -0.5 * dof * kLogTwoPi - 0.5 * cfg.num_groups() * std::log(static_cast<double>(cfg.group_size())) -
         0.5 * dof * std::log(sigma2) - cfg.total_observations() * stat.s2 / (2.0 * sigma2);
}

double marginalized_sigma2_ml(const SufficientStat& stat, const ProblemConfig& cfg) {
  require_valid(stat, cfg);
  const double j = cfg.group_size();
  return stat.s2 * (j / (j - 1.0));
}

}  // namespace nsmml
