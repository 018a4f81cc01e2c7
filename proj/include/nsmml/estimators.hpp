#pragma once

/** @file
 * Point estimators for the Neyman-Scott problem: maximum likelihood, the
 * Ideal Point (forward and reverse), epsilon Ideal Group regions,
 * Wallace-Freeman, and the estimator that first integrates the means out.
 */

#include <optional>
#include <string_view>

#include "nsmml/box.hpp"
#include "nsmml/model.hpp"

namespace nsmml {

enum class Method { MaximumLikelihood, IdealPoint, WallaceFreeman, MarginalizedSigma2 };

std::string_view method_name(Method method);

struct Estimate {
  Parameter theta;
  Method method;
  std::optional<PriorSpec> prior;  // empty for ML
};

/// Shape of R_theta(x) - R*_theta in relative coordinates t = log(s / sigma)
/// and w = (m - mu) / sigma:
///
///   excess(t, w) = scale_excess(t) + (J/2) |w|^2,
///   scale_excess(t) = (NJ/2)(e^{2t} - e^{2t*}) - 2k (t - t*),
///
/// with k = (N(J-1) + p - 1) / 2 and t* = log(2k / NJ) / 2. The excess is
/// independent of theta for every prior in the family; only R*_theta drifts.
class PenaltyShape {
 public:
  PenaltyShape(const PriorSpec& prior, const ProblemConfig& cfg);

  /// log(s / sigma) at the ideal point.
  double ideal_log_ratio() const { return t_star_; }
  double scale_excess(double log_ratio) const;
  double excess(double log_ratio, double offset_sq) const { return scale_excess(log_ratio) + 0.5 * group_size_ * offset_sq; }

  /// Both roots of scale_excess(t) = epsilon, lower then upper.
  std::pair<double, double> log_ratio_range(double epsilon) const;

  /// Radius of |w| allowed at log ratio t for the epsilon sublevel set (0 outside the range).
  double offset_radius(double log_ratio, double epsilon) const;

 private:
  double nj_;
  double group_size_;
  double shape_;  // k
  double t_star_;
};

Estimate ml_estimate(const SufficientStat& stat, const ProblemConfig& cfg);

/// Closed-form stationary point of R: mu = m, sigma^2 = NJ s^2 / (N(J-1) + p - 1).
Estimate ip_estimate(const SufficientStat& stat, const PriorSpec& prior, const ProblemConfig& cfg);

/// argmin over observations of R_theta: m = mu, s^2 = sigma^2 (N(J-1) + p - 1) / NJ.
SufficientStat ip_reverse(const Parameter& theta, const PriorSpec& prior, const ProblemConfig& cfg);

/// R*_theta, the value of R_theta at ip_reverse(theta).
double ideal_point_penalty(const Parameter& theta, const PriorSpec& prior, const ProblemConfig& cfg);

/// The sublevel set {x : R_theta(x) <= R*_theta + epsilon}.
class IdealGroupRegion {
 public:
  IdealGroupRegion(Parameter center, PriorSpec prior, double epsilon, ProblemConfig cfg);

  const Parameter& center() const { return center_; }
  double epsilon() const { return epsilon_; }
  double threshold() const { return r_star_ + epsilon_; }
  /// Bounding box of the region in (log s, m / s) coordinates.
  const Box& bounding_box() const { return box_; }

  bool contains(const SufficientStat& stat) const;

 private:
  Parameter center_;
  PriorSpec prior_;
  double epsilon_;
  ProblemConfig cfg_;
  double r_star_;
  Box box_;
};

/// Throws std::invalid_argument unless epsilon > 0.
IdealGroupRegion ideal_group(const Parameter& theta, const PriorSpec& prior, double epsilon,
                             const ProblemConfig& cfg);

/// log h(theta) + log f(x | theta) - log sqrt(det F(theta)), with h written
/// as a density in (sigma^2, mu): sigma^(-p) / (2 sigma).
double wf_objective(const Parameter& theta, const SufficientStat& stat, const PriorSpec& prior,
                    const ProblemConfig& cfg);

/// Closed-form Wallace-Freeman estimate: mu = m, sigma^2 = NJ s^2 / (N(J-1) + p - 1).
Estimate wf_estimate(const SufficientStat& stat, const PriorSpec& prior, const ProblemConfig& cfg);

struct NumericEstimate {
  double sigma2 = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Brent search for the Wallace-Freeman sigma^2 over log sigma^2 at mu = m.
/// Verification path only; wf_estimate is the primary route.
NumericEstimate wf_estimate_numeric(const SufficientStat& stat, const PriorSpec& prior, const ProblemConfig& cfg);

/// log of the likelihood with mu integrated out under a flat prior:
/// -(N(J-1)/2) log sigma^2 - NJ s^2 / (2 sigma^2) + const.
double marginalized_log_likelihood(double sigma2, const SufficientStat& stat, const ProblemConfig& cfg);

/// argmax of marginalized_log_likelihood: J s^2 / (J - 1).
double marginalized_sigma2_ml(const SufficientStat& stat, const ProblemConfig& cfg);

}  // namespace nsmml
