#include "nsmml/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nsmml {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

// Sum of squares sum_n (m_n - mu_n)^2.
double squared_offset(std::span<const double> means, std::span<const double> mu) {
  double total = 0.0;
  for (std::size_t n = 0; n < means.size(); ++n) {
    const double d = means[n] - mu[n];
    total += d * d;
  }
  return total;
}

}  // namespace

ProblemConfig::ProblemConfig(int num_groups, int group_size) : num_groups_(num_groups), group_size_(group_size) {
  if (num_groups < 1) {
    throw std::invalid_argument("ProblemConfig: N must be at least 1, got " + std::to_string(num_groups));
  }
  if (group_size < 2) {
    throw std::invalid_argument("ProblemConfig: J must be at least 2, got " + std::to_string(group_size));
  }
}

RawData::RawData(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows < 1 || cols < 1 || values_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw std::invalid_argument("RawData: " + std::to_string(values_.size()) + " values do not form a " +
                                std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
  }
}

PriorSpec::PriorSpec(double exponent) : exponent_(exponent) {
  if (!std::isfinite(exponent) || exponent < 1.0) {
    throw std::invalid_argument("PriorSpec: exponent must be >= 1, got " + std::to_string(exponent));
  }
}

void require_valid(const SufficientStat& stat, const ProblemConfig& cfg) {
  if (stat.means.size() != static_cast<std::size_t>(cfg.num_groups())) {
    throw std::invalid_argument("statistic has " + std::to_string(stat.means.size()) + " means, expected " +
                                std::to_string(cfg.num_groups()));
  }
  if (!(stat.s2 > 0.0) || !std::isfinite(stat.s2)) {
    throw std::invalid_argument("statistic requires s2 > 0, got " + std::to_string(stat.s2));
  }
  for (double m : stat.means) {
    if (!std::isfinite(m)) throw std::invalid_argument("statistic has a non-finite mean");
  }
}

void require_valid(const Parameter& theta, const ProblemConfig& cfg) {
  if (theta.mu.size() != static_cast<std::size_t>(cfg.num_groups())) {
    throw std::invalid_argument("parameter has " + std::to_string(theta.mu.size()) + " means, expected " +
                                std::to_string(cfg.num_groups()));
  }
  if (!(theta.sigma2 > 0.0) || !std::isfinite(theta.sigma2)) {
    throw std::invalid_argument("parameter requires sigma2 > 0, got " + std::to_string(theta.sigma2));
  }
  for (double m : theta.mu) {
    if (!std::isfinite(m)) throw std::invalid_argument("parameter has a non-finite mean");
  }
}

SufficientStat sufficient_stats(const RawData& data, const ProblemConfig& cfg) {
  if (data.rows() != cfg.num_groups() || data.cols() != cfg.group_size()) {
    throw std::invalid_argument("sufficient_stats: data is " + std::to_string(data.rows()) + "x" +
                                std::to_string(data.cols()) + " but the problem is " +
                                std::to_string(cfg.num_groups()) + "x" + std::to_string(cfg.group_size()));
  }
  SufficientStat stat;
  stat.means.resize(static_cast<std::size_t>(cfg.num_groups()));
  double within = 0.0;
  for (int n = 0; n < data.rows(); ++n) {
    const auto row = data.row(n);
    double sum = 0.0;
    for (double x : row) sum += x;
    const double mean = sum / static_cast<double>(row.size());
    for (double x : row) within += (x - mean) * (x - mean);
    stat.means[static_cast<std::size_t>(n)] = mean;
  }
  stat.s2 = within / static_cast<double>(cfg.total_observations());
  return stat;
}

double log_likelihood(const SufficientStat& stat, const Parameter& theta, const ProblemConfig& cfg) {
  require_valid(stat, cfg);
  require_valid(theta, cfg);
  const double nj = cfg.total_observations();
  const double sum_sq = nj * stat.s2 + cfg.group_size() * squared_offset(stat.means, theta.mu);
  return -0.5 * nj * (kLogTwoPi + std::log(theta.sigma2)) - sum_sq / (2.0 * theta.sigma2);
}

double log_marginal(const SufficientStat& stat, const PriorSpec& prior, const ProblemConfig& cfg) {
  require_valid(stat, cfg);
  const double dof = cfg.residual_dof();
  const double shape = 0.5 * (dof + prior.exponent() - 1.0);
  if (!(shape > 0.0)) throw std::domain_error("log_marginal: Gamma argument is not positive");
  const double nj = cfg.total_observations();
  return -0.5 * dof * kLogTwoPi - 0.5 * cfg.num_groups() * std::log(static_cast<double>(cfg.group_size())) -
         std::numbers::ln2 - shape * std::log(0.5 * nj * stat.s2) + std::lgamma(shape);
}

double code_penalty(const Parameter& theta, const SufficientStat& stat, const PriorSpec& prior,
                    const ProblemConfig& cfg) {
  return log_marginal(stat, prior, cfg) - log_likelihood(stat, theta, cfg);
}

double fisher_log_sqrt_det(const Parameter& theta, const ProblemConfig& cfg) {
  require_valid(theta, cfg);
  const double n = cfg.num_groups();
  const double nj = cfg.total_observations();
  return 0.5 * std::log(0.5 * nj) + 0.5 * n * std::log(static_cast<double>(cfg.group_size())) -
         0.5 * (n + 2.0) * std::log(theta.sigma2);
}

double log_stat_jacobian(double s2, const ProblemConfig& cfg) {
  if (!(s2 > 0.0)) throw std::invalid_argument("log_stat_jacobian: s2 must be positive");
  const double dof = cfg.residual_dof();
  const double nj = cfg.total_observations();
  return 0.5 * cfg.num_groups() * std::log(static_cast<double>(cfg.group_size())) + std::numbers::ln2 +
         0.5 * dof * std::log(std::numbers::pi) - std::lgamma(0.5 * dof) + 0.5 * dof * std::log(nj) +
         0.5 * (dof - 1.0) * std::log(s2);
}

double log_marginal_stat_density(const SufficientStat& stat, const PriorSpec& prior, const ProblemConfig& cfg) {
  return log_marginal(stat, prior, cfg) + log_stat_jacobian(stat.s2, cfg);
}

double log_likelihood_stat_density(const SufficientStat& stat, const Parameter& theta, const ProblemConfig& cfg) {
  return log_likelihood(stat, theta, cfg) + log_stat_jacobian(stat.s2, cfg);
}

std::vector<double> log_scale_coords(const SufficientStat& stat) {
  const double s = std::sqrt(stat.s2);
  std::vector<double> point;
  point.reserve(stat.means.size() + 1);
  point.push_back(std::log(s));
  for (double m : stat.means) point.push_back(m / s);
  return point;
}

std::vector<double> log_scale_coords(const Parameter& theta) {
  const double sigma = std::sqrt(theta.sigma2);
  std::vector<double> point;
  point.reserve(theta.mu.size() + 1);
  point.push_back(std::log(sigma));
  for (double m : theta.mu) point.push_back(m / sigma);
  return point;
}

SufficientStat stat_from_log_scale(std::span<const double> point) {
  if (point.size() < 2) throw std::invalid_argument("stat_from_log_scale: need at least 2 coordinates");
  const double s = std::exp(point[0]);
  SufficientStat stat;
  stat.s2 = s * s;
  for (std::size_t i = 1; i < point.size(); ++i) stat.means.push_back(point[i] * s);
  return stat;
}

Parameter parameter_from_log_scale(std::span<const double> point) {
  if (point.size() < 2) throw std::invalid_argument("parameter_from_log_scale: need at least 2 coordinates");
  const double sigma = std::exp(point[0]);
  Parameter theta;
  theta.sigma2 = sigma * sigma;
  for (std::size_t i = 1; i < point.size(); ++i) theta.mu.push_back(point[i] * sigma);
  return theta;
}

}  // namespace nsmml
