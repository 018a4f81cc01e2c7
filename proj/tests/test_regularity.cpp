#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nsmml/estimators.hpp"
#include "nsmml/random.hpp"
#include "nsmml/regularity.hpp"

using namespace nsmml;

namespace {

Parameter random_parameter(Rng& rng, int n) {
  Parameter theta{std::exp(rng.uniform(-2.0, 2.0)), {}};
  for (int i = 0; i < n; ++i) theta.mu.push_back(rng.normal(0.0, 2.0));
  return theta;
}

SufficientStat random_stat(Rng& rng, int n) {
  SufficientStat stat{{}, std::exp(rng.uniform(-2.0, 2.0))};
  for (int i = 0; i < n; ++i) stat.means.push_back(rng.normal(0.0, 2.0));
  return stat;
}

Automorphism random_automorphism(Rng& rng, int n) {
  Automorphism aut{std::exp(rng.uniform(-1.0, 1.0)), {}};
  for (int i = 0; i < n; ++i) aut.beta.push_back(rng.normal());
  return aut;
}

}  // namespace

TEST_SUITE("regularity") {

TEST_CASE("automorphisms of the scale-free problem") {
  Rng rng(41);
  for (int n : {1, 2, 5}) {
    for (int j : {2, 3}) {
      const ProblemConfig cfg(n, j);
      for (int i = 0; i < 5; ++i) {
        const auto aut = random_automorphism(rng, n);
        const auto rep = check_automorphism(aut, PriorSpec::scale_free(cfg), cfg, 40, 100 + i, 1e-9);
        CHECK(rep.marginal_ok);
        CHECK(rep.likelihood_ok);
        CHECK(rep.max_violation < 1e-9);
        CHECK(rep.predicted_marginal_violation == 0.0);
      }
    }
  }
}

TEST_CASE("automorphisms under the Wallace prior") {
  Rng rng(42);
  for (int n : {1, 2, 3}) {
    const ProblemConfig cfg(n, 3);
    // Translations keep both densities.
    Automorphism shift{1.0, {}};
    for (int i = 0; i < n; ++i) shift.beta.push_back(rng.normal());
    const auto t = check_automorphism(shift, PriorSpec::wallace(), cfg, 40, 7, 1e-9);
    CHECK(t.marginal_ok);
    CHECK(t.likelihood_ok);
    // Doubling the scale breaks the marginal by exactly |N + 1 - p| log 2 = N log 2.
    const Automorphism scale{2.0, std::vector<double>(static_cast<std::size_t>(n), 0.0)};
    const auto s = check_automorphism(scale, PriorSpec::wallace(), cfg, 40, 8, 1e-9);
    CHECK_FALSE(s.marginal_ok);
    CHECK(s.likelihood_ok);
    CHECK(s.max_marginal_violation == doctest::Approx(n * std::log(2.0)).epsilon(1e-12));
    CHECK(s.predicted_marginal_violation == doctest::Approx(n * std::log(2.0)).epsilon(1e-15));
  }
}

TEST_CASE("automorphism algebra") {
  Rng rng(43);
  const auto a = random_automorphism(rng, 3);
  const auto b = random_automorphism(rng, 3);
  const auto x = random_stat(rng, 3);
  const auto composed = b.after(a).apply(x);
  const auto stepwise = b.apply(a.apply(x));
  CHECK(composed.s2 == doctest::Approx(stepwise.s2).epsilon(1e-14));
  for (int n = 0; n < 3; ++n) CHECK(composed.means[n] == doctest::Approx(stepwise.means[n]).epsilon(1e-14));
  const auto back = a.inverse().apply(a.apply(x));
  CHECK(back.s2 == doctest::Approx(x.s2).epsilon(1e-14));
  CHECK(a.log_jacobian() == doctest::Approx(4.0 * std::log(a.alpha)).epsilon(1e-15));
}

TEST_CASE("transitivity witnesses") {
  const SufficientStat unit{{0.0}, 1.0};
  const auto id = transitivity_witness(unit, unit);
  CHECK(id.alpha == 1.0);
  CHECK(id.beta == std::vector<double>{0.0});
  const SufficientStat target{{3.0}, 4.0};
  const auto w = transitivity_witness(unit, target);
  CHECK(w.alpha == 2.0);
  CHECK(w.beta == std::vector<double>{3.0});
  const auto image = w.apply(unit);
  CHECK(image.s2 == target.s2);
  CHECK(image.means == target.means);

  Rng rng(44);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_stat(rng, 2);
    const auto b = random_stat(rng, 2);
    const auto c = random_stat(rng, 2);
    const auto via = transitivity_witness(b, c).after(transitivity_witness(a, b)).apply(a);
    const auto direct = transitivity_witness(a, c).apply(a);
    CHECK(via.s2 == doctest::Approx(direct.s2).epsilon(1e-13));
    CHECK(via.means[0] == doctest::Approx(direct.means[0]).epsilon(1e-12).scale(1.0));
    CHECK(direct.s2 == doctest::Approx(c.s2).epsilon(1e-14));

    const auto p = random_parameter(rng, 2);
    const auto q = random_parameter(rng, 2);
    const auto moved = transitivity_witness(p, q).apply(p);
    CHECK(moved.sigma2 == doctest::Approx(q.sigma2).epsilon(1e-14));
    CHECK(moved.mu[1] == doctest::Approx(q.mu[1]).epsilon(1e-13).scale(1.0));
  }
}

TEST_CASE("homogeneity") {
  Rng rng(45);
  for (int n : {1, 3}) {
    const ProblemConfig cfg(n, 2);
    std::vector<Parameter> thetas;
    for (int i = 0; i < 100; ++i) thetas.push_back(random_parameter(rng, n));
    const auto sf = homogeneity_check(PriorSpec::scale_free(cfg), cfg, thetas, 1e-9);
    CHECK(sf.is_homogeneous);
    CHECK(sf.spread < 1e-9);
    const auto w = homogeneity_check(PriorSpec::wallace(), cfg, thetas, 1e-9);
    CHECK_FALSE(w.is_homogeneous);
    CHECK(w.drift.predicted_slope == doctest::Approx(0.5 * n));
    CHECK(w.drift.max_residual < 1e-9);
    CHECK(w.drift.fitted_slope == doctest::Approx(0.5 * n).epsilon(1e-9));

    // sigma^2 in {1, 4}: difference (N/2) log 4, by direct evaluation at the two ideal points.
    const Parameter a{1.0, std::vector<double>(static_cast<std::size_t>(n), 0.3)};
    const Parameter b{4.0, std::vector<double>(static_cast<std::size_t>(n), -1.1)};
    const double ra = code_penalty(a, ip_reverse(a, PriorSpec::wallace(), cfg), PriorSpec::wallace(), cfg);
    const double rb = code_penalty(b, ip_reverse(b, PriorSpec::wallace(), cfg), PriorSpec::wallace(), cfg);
    CHECK(rb - ra == doctest::Approx(0.5 * n * std::log(4.0)).epsilon(1e-12));

    // Translation-only families are homogeneous for every prior.
    std::vector<Parameter> translated;
    for (int i = 0; i < 50; ++i) {
      Parameter t = random_parameter(rng, n);
      t.sigma2 = 2.5;
      translated.push_back(t);
    }
    CHECK(homogeneity_check(PriorSpec::wallace(), cfg, translated, 1e-9).is_homogeneous);
    CHECK(homogeneity_check(PriorSpec(7.0), cfg, translated, 1e-9).is_homogeneous);
  }
}

TEST_CASE("comprehensiveness") {
  Rng rng(46);
  for (int n : {1, 2, 4}) {
    const ProblemConfig cfg(n, 3);
    std::vector<SufficientStat> stats;
    for (int i = 0; i < 100; ++i) stats.push_back(random_stat(rng, n));
    const auto sf = comprehensiveness_check(PriorSpec::scale_free(cfg), cfg, stats, 1e-9);
    CHECK(sf.is_comprehensive);
    CHECK(sf.spread < 1e-9);
    const auto w = comprehensiveness_check(PriorSpec::wallace(), cfg, stats, 1e-9);
    CHECK_FALSE(w.is_comprehensive);
    CHECK(w.drift.max_residual < 1e-9);

    const std::vector<SufficientStat> pair{{std::vector<double>(static_cast<std::size_t>(n), 0.0), 1.0},
                                           {std::vector<double>(static_cast<std::size_t>(n), 5.0), 4.0}};
    const auto two = comprehensiveness_check(PriorSpec::wallace(), cfg, pair, 1e-9);
    CHECK(two.r_opt_values[1] - two.r_opt_values[0] == doctest::Approx(0.5 * n * std::log(4.0)).epsilon(1e-12));
    CHECK(comprehensiveness_check(PriorSpec::wallace(), cfg, {stats.front()}, 1e-9).is_comprehensive);
  }
}

TEST_CASE("concentration boxes") {
  Rng rng(47);
  const ProblemConfig cfg(2, 2);
  for (double p : {1.0, 3.0}) {
    const PriorSpec prior(p);
    for (int i = 0; i < 10; ++i) {
      const auto stat = random_stat(rng, 2);
      const double eps = std::exp(rng.uniform(-2.0, 1.0));
      const Box box = concentration_box(stat, prior, eps, cfg);
      CHECK(box.contains(log_scale_coords(ip_estimate(stat, prior, cfg).theta), 1e-12));
      const Box wider = concentration_box(stat, prior, 2.0 * eps, cfg);
      CHECK(wider.contains(box, 1e-12));

      // Every epsilon-preimage parameter found by sampling lies inside the box.
      for (int k = 0; k < 3000; ++k) {
        std::vector<double> point(3);
        for (std::size_t d = 0; d < 3; ++d) {
          const double pad = 0.3 * box.width(d);
          point[d] = rng.uniform(box.lo[d] - pad, box.hi[d] + pad);
        }
        const auto theta = parameter_from_log_scale(point);
        if (code_penalty(theta, stat, prior, cfg) - ideal_point_penalty(theta, prior, cfg) < eps) {
          CHECK(box.contains(point, 1e-12));
        }
      }
    }
  }
  // Pure rescaling translates the box along the log-scale axis.
  const PriorSpec sf = PriorSpec::scale_free(cfg);
  const SufficientStat stat{{0.4, -1.2}, 0.8};
  const Automorphism scale{1.7, {0.0, 0.0}};
  const Box a = concentration_box(stat, sf, 0.5, cfg);
  const Box b = concentration_box(scale.apply(stat), sf, 0.5, cfg);
  CHECK(b.lo[0] - a.lo[0] == doctest::Approx(std::log(1.7)).epsilon(1e-12));
  CHECK(b.hi[0] - a.hi[0] == doctest::Approx(std::log(1.7)).epsilon(1e-12));
  for (std::size_t d = 1; d < 3; ++d) {
    CHECK(b.lo[d] == doctest::Approx(a.lo[d]).epsilon(1e-9));
    CHECK(b.hi[d] == doctest::Approx(a.hi[d]).epsilon(1e-9));
  }
}

TEST_CASE("find_valid_c") {
  CHECK_FALSE(find_valid_c(ProblemConfig(1, 2)).has_value());
  CHECK_FALSE(find_valid_c(ProblemConfig(1, 5)).has_value());

  // Brute-force integer scan up to 10^6 for N = 2, J = 2, in exact-ish log arithmetic.
  const ProblemConfig cfg(2, 2);
  const auto c = find_valid_c(cfg);
  REQUIRE(c.has_value());
  auto holds = [](long double c0) {
    const long double lhs = 8.0L * std::log(c0) - 4.0L * std::log(8.0L);
    const long double rhs = 7.0L * std::log(c0 + 1.0L);
    const bool count = (c0 + 1.0L) * (c0 + 1.0L) >= c0 * c0 + 6.0L;
    return lhs >= rhs && count;
  };
  std::int64_t first = -1;
  for (std::int64_t k = 2; k <= 1000000; ++k) {
    if (holds(static_cast<long double>(k))) {
      first = k;
      break;
    }
  }
  CHECK(*c == first);
  // e^T >= k + 1 with k = 2N + 1 + c^N.
  const LocalityCertificate cert({1.0, {0.0, 0.0}}, cfg, *c);
  CHECK(std::exp(cert.margin()) >= cert.competitor_count() + 1.0);

  for (int n = 2; n <= 5; ++n) {
    for (int j = 2; j <= 4; ++j) {
      const ProblemConfig other(n, j);
      const auto found = find_valid_c(other);
      REQUIRE(found.has_value());
      const long double cd = static_cast<long double>(*found);
      CHECK(4.0L * j * std::log(cd) - 2.0L * j * std::log(2.0L * n * j) >= 7.0L * std::log(cd + 1.0L));
      CHECK(n * std::log1p(1.0L / cd) >= std::log1p((2.0L * n + 2.0L) / std::pow(cd, n)));
    }
  }
}

TEST_CASE("locality certificate: competitor cases") {
  const ProblemConfig cfg(2, 2);
  const std::int64_t c = *find_valid_c(cfg);
  const Parameter theta{1.0, {0.0, 0.0}};
  const LocalityCertificate cert(theta, cfg, c);
  const double t = cert.margin();
  const double sigma = 1.0;
  const int j = 2;

  // Shifted-mean competitor: gain -JT + (J sqrt(2T) / sigma)(m_n - mu_n).
  for (double offset : {1.01, 1.5, 3.0}) {
    const double m = offset * std::sqrt(2.0 * t);
    const SufficientStat stat{{m, 0.0}, 1.0};
    const double gain = log_likelihood(stat, cert.competitor(0), cfg) - log_likelihood(stat, theta, cfg);
    CHECK(gain == doctest::Approx(-j * t + j * std::sqrt(2.0 * t) / sigma * m).epsilon(1e-10));
    CHECK(gain > t);
    CHECK(cert.excess_over_margin(stat) > 0.0);
  }
  // Inflated competitor alone beats the margin at s / sigma = 2 Delta.
  {
    const double s = 2.0 * cert.upper_ratio();
    const SufficientStat stat{{0.0, 0.0}, s * s};
    const double gain = log_likelihood(stat, cert.competitor(4), cfg) - log_likelihood(stat, theta, cfg);
    CHECK(gain > t);
  }
  CHECK(cert.competitor(4).sigma2 == doctest::Approx(std::exp(2.0)).epsilon(1e-15));
  CHECK(cert.competitor_count() == doctest::Approx(5.0 + static_cast<double>(c) * static_cast<double>(c)));
  CHECK_THROWS_AS(cert.competitor(-1), std::out_of_range);

  // Points inside the exempt box are flagged.
  CHECK(cert.in_exempt_region({{0.0, 0.0}, 1.0}));
  CHECK_FALSE(cert.in_exempt_region({{0.0, 0.0}, std::pow(cert.upper_ratio() * 1.01, 2)}));
  CHECK_FALSE(cert.in_exempt_region({{0.0, 0.0}, std::pow(cert.lower_ratio() * 0.99, 2)}));
}

TEST_CASE("locality certificate: nearest grid point is the grid maximiser") {
  // Small c so the grid can be enumerated; c^2 must still exceed 2NJ.
  const ProblemConfig cfg(2, 2);
  Rng rng(48);
  for (std::int64_t c : {3, 5, 8}) {
    const LocalityCertificate cert({1.7, {0.3, -0.2}}, cfg, c);
    for (int i = 0; i < 100; ++i) {
      const SufficientStat stat{{rng.normal(0.3, 3.0), rng.normal(-0.2, 3.0)}, std::exp(rng.uniform(-6.0, 3.0))};
      double best = -INFINITY;
      for (std::int64_t k = 0; k < static_cast<std::int64_t>(cert.competitor_count()); ++k) {
        best = std::max(best, log_likelihood(stat, cert.competitor(k), cfg));
      }
      CHECK(cert.best_competitor_log_likelihood(stat) == doctest::Approx(best).epsilon(1e-13));
    }
  }
  CHECK_THROWS_AS(LocalityCertificate({1.0, {0.0, 0.0}}, cfg, 2), std::invalid_argument);
}

TEST_CASE("locality certificate: verification and covariance") {
  const ProblemConfig cfg(2, 2);
  const std::int64_t c = *find_valid_c(cfg);
  const LocalityCertificate cert({1.0, {0.0, 0.0}}, cfg, c);
  const auto report = verify_locality(cert, LocalityGrid{});
  CHECK(report.ok);
  CHECK(report.exterior_points + report.exempt_points == 24 * 24 * 24);
  CHECK(report.exterior_points >= 10000);
  CHECK(report.worst_excess > 0.0);

  // V0 is a function of (N, J, c) only, and transported certificates agree exactly.
  Rng rng(49);
  for (int i = 0; i < 10; ++i) {
    const Parameter theta = random_parameter(rng, 2);
    const LocalityCertificate other(theta, cfg, c);
    CHECK(other.v0_bound() == cert.v0_bound());
    const auto aut = random_automorphism(rng, 2);
    const LocalityCertificate moved(aut.apply(theta), cfg, c);
    CHECK(moved.v0_bound() == other.v0_bound());
    // Exempt membership is transported.
    for (int k = 0; k < 100; ++k) {
      SufficientStat stat{{theta.mu[0] + rng.normal(0.0, 6.0), theta.mu[1] + rng.normal(0.0, 6.0)},
                          theta.sigma2 * std::exp(rng.uniform(-14.0, 4.0))};
      CHECK(other.in_exempt_region(stat) == moved.in_exempt_region(aut.apply(stat)));
    }
  }
  const Box native = cert.exempt_box_native();
  CHECK(native.lo[0] == doctest::Approx(std::log(cert.lower_ratio())));
  CHECK(native.hi[0] == doctest::Approx(std::log(cert.upper_ratio())));
  CHECK(cert.exempt_box().contains(log_scale_coords(SufficientStat{{0.0, 0.0}, 1.0}), 0.0));
}

}  // TEST_SUITE
