// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   acceptance [--output-dir DIR]
//
// With --output-dir the sweep and summary tables are also written as CSV so
// that two runs can be compared byte for byte from outside.

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nsmml/estimators.hpp"
#include "nsmml/harness.hpp"
#include "nsmml/model.hpp"
#include "nsmml/random.hpp"
#include "nsmml/regularity.hpp"
#include "nsmml/smml.hpp"
#include "oracles.hpp"
#include "smml_corpus.hpp"

using namespace nsmml;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

SufficientStat random_stat(Rng& rng, int n) {
  SufficientStat stat{{}, std::exp(rng.uniform(-2.0, 2.0))};
  for (int i = 0; i < n; ++i) stat.means.push_back(rng.normal(0.0, 2.0));
  return stat;
}

Parameter random_parameter(Rng& rng, int n) {
  Parameter theta{std::exp(rng.uniform(-2.0, 2.0)), {}};
  for (int i = 0; i < n; ++i) theta.mu.push_back(rng.normal(0.0, 2.0));
  return theta;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::abs(b); }

SweepSpec dichotomy_spec() {
  SweepSpec s;
  s.group_size = 2;
  s.num_groups = {2000};
  s.trials = 200;
  s.sigma2_true = 1.0;
  s.seed = 20240601;
  return s;
}

std::string sweep_csv() {
  std::ostringstream out;
  write_sweep_csv(out, run_sweep(dichotomy_spec()));
  return out.str();
}

Outcome criterion1() {
  const auto rows = run_sweep(dichotomy_spec());
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const bool inconsistent =
        r.estimator == EstimatorKind::ML || (r.prior_exponent && *r.prior_exponent == r.num_groups + 1.0);
    const double lo = inconsistent ? 0.48 : 0.97;
    const double hi = inconsistent ? 0.52 : 1.03;
    ok = ok && r.mean_ratio >= lo && r.mean_ratio <= hi;
    detail += fmt::format("{}{}={:.4f} ", estimator_name(r.estimator),
                          r.prior_exponent ? fmt::format("(p={})", *r.prior_exponent) : "", r.mean_ratio);
  }
  return {ok && rows.size() == 6, detail};
}

Outcome criterion2() {
  Rng rng(2);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng.below(5));
    const int j = 2 + static_cast<int>(rng.below(4));
    const ProblemConfig cfg(n, j);
    const auto stat = random_stat(rng, n);
    const PriorSpec sf = PriorSpec::scale_free(cfg);
    const auto ml = ml_estimate(stat, cfg).theta;
    for (const auto& est : {ip_estimate(stat, sf, cfg).theta, wf_estimate(stat, sf, cfg).theta}) {
      worst = std::max(worst, rel_err(est.sigma2, ml.sigma2));
      for (int k = 0; k < n; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        worst = std::max(worst, std::abs(est.mu[kk] - ml.mu[kk]) / std::max(1.0, std::abs(ml.mu[kk])));
      }
    }
  }
  return {worst < 1e-10, fmt::format("max relative error {:.3g}", worst)};
}

Outcome criterion3() {
  Rng rng(3);
  double worst = 0.0;
  bool distinct = true;
  for (int i = 0; i < 100; ++i) {
    const int n = 1 + static_cast<int>(rng.below(5));
    const int j = 2 + static_cast<int>(rng.below(4));
    const ProblemConfig cfg(n, j);
    const auto stat = random_stat(rng, n);
    const double marg = marginalized_sigma2_ml(stat, cfg);
    const double ip = ip_estimate(stat, PriorSpec::scale_free(cfg), cfg).theta.sigma2;
    worst = std::max(worst, rel_err(marg / ip, j / (j - 1.0)));
    worst = std::max(worst, rel_err(ip, stat.s2));
    distinct = distinct && marg != ip;
  }
  return {distinct && worst < 1e-12, fmt::format("max relative error of J/(J-1) ratio {:.3g}", worst)};
}

Outcome criterion4() {
  Rng rng(4);
  bool ok = true;
  std::string detail;
  for (int n : {1, 2, 5}) {
    const ProblemConfig cfg(n, 3);
    std::vector<Parameter> thetas;
    std::vector<SufficientStat> stats;
    for (int i = 0; i < 100; ++i) {
      thetas.push_back(random_parameter(rng, n));
      stats.push_back(random_stat(rng, n));
    }
    const auto h_sf = homogeneity_check(PriorSpec::scale_free(cfg), cfg, thetas, 1e-9);
    const auto c_sf = comprehensiveness_check(PriorSpec::scale_free(cfg), cfg, stats, 1e-9);
    const auto h_w = homogeneity_check(PriorSpec::wallace(), cfg, thetas, 1e-9);
    const auto c_w = comprehensiveness_check(PriorSpec::wallace(), cfg, stats, 1e-9);
    ok = ok && h_sf.is_homogeneous && h_sf.spread < 1e-9 && c_sf.is_comprehensive && c_sf.spread < 1e-9;
    ok = ok && !h_w.is_homogeneous && !c_w.is_comprehensive;
    ok = ok && h_w.drift.predicted_slope == n / 2.0 && h_w.drift.max_residual < 1e-9;
    ok = ok && c_w.drift.predicted_slope == n / 2.0 && c_w.drift.max_residual < 1e-9;
    detail = fmt::format("N={}: sf spread {:.2g}/{:.2g}, wallace residual {:.2g}/{:.2g}; ", n, h_sf.spread,
                         c_sf.spread, h_w.drift.max_residual, c_w.drift.max_residual);

    // Automorphisms: the marginal is preserved exactly when (N+1-p) log alpha = 0.
    for (double p : {1.0, n + 1.0, 2.5}) {
      for (int a = 0; a < 10; ++a) {
        Automorphism aut{a % 3 == 0 ? 1.0 : std::exp(rng.uniform(-1.0, 1.0)), {}};
        for (int k = 0; k < n; ++k) aut.beta.push_back(rng.normal());
        const auto rep = check_automorphism(aut, PriorSpec(p), cfg, 100, 400 + static_cast<std::uint64_t>(a), 1e-9);
        const double predicted = std::abs(n + 1.0 - p) * std::abs(std::log(aut.alpha));
        ok = ok && rep.likelihood_ok && rep.marginal_ok == (predicted <= 1e-9);
        ok = ok && std::abs(rep.max_marginal_violation - predicted) < 1e-9;
      }
    }
  }
  return {ok, detail};
}

Outcome criterion5() {
  Rng rng(5);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int n = 1 + static_cast<int>(rng.below(2));
    const int j = 2 + static_cast<int>(rng.below(2));
    const ProblemConfig cfg(n, j);
    std::vector<double> means;
    for (int k = 0; k < n; ++k) means.push_back(rng.normal());
    const double s2 = std::exp(rng.uniform(-1.0, 1.0));
    const auto x = oracle::matrix_with_stats(means, s2, j);
    const SufficientStat stat{means, s2};
    for (const PriorSpec& prior : {PriorSpec::wallace(), PriorSpec::scale_free(cfg)}) {
      const double closed = log_marginal(stat, prior, cfg);
      const double quad = oracle::quadrature_log_marginal(x, prior.exponent());
      worst = std::max(worst, std::abs(std::expm1(closed - quad)));
    }
  }
  return {worst < 1e-6, fmt::format("max relative error {:.3g}", worst)};
}

Outcome criterion6() {
  const ProblemConfig cfg(2, 2);
  const auto c = find_valid_c(cfg);
  if (!c) return {false, "no valid c"};
  const LocalityCertificate cert(Parameter{1.0, {0.0, 0.0}}, cfg, *c);
  const auto report = verify_locality(cert, LocalityGrid{});
  Rng rng(6);
  bool same = true;
  for (int i = 0; i < 10; ++i) {
    const LocalityCertificate other(random_parameter(rng, 2), cfg, *c);
    same = same && other.v0_bound() == cert.v0_bound();
  }
  return {report.ok && report.exterior_points >= 10000 && report.worst_excess > 0.0 && same,
          fmt::format("c={} exterior={} worst margin excess {:.4g} V0={:.6g}", *c, report.exterior_points,
                      report.worst_excess, report.v0_bound)};
}

Outcome criterion7() {
  const auto instances = corpus::oracle_corpus(7);
  int matches = 0;
  bool never_below = true;
  bool never_above = true;
  for (const auto& p : instances) {
    const double exact = smml_exhaustive(p).front().cost.total;
    LocalSearchOptions opts;
    opts.seed = 7;
    const double local = smml_local_search(p, opts).cost.total;
    never_below = never_below && local >= exact - 1e-12;
    never_above = never_above && local <= pointwise_codebook(p).cost.total + 1e-12;
    if (local <= exact + 1e-9) ++matches;
  }
  return {matches >= 45 && never_below && never_above, fmt::format("{}/50 matched", matches)};
}

Outcome criterion8() {
  const ProblemConfig cfg(1, 2);
  DiscretizeOptions o;
  o.box = Box{{-0.8, -1.2}, {0.8, 1.2}};
  o.resolution = {4, 4};
  o.topology = Topology::Torus;
  const auto p = discretize(cfg, PriorSpec::scale_free(cfg), o);
  const auto optima = smml_exhaustive(p);
  std::set<std::vector<int>> optimal;
  for (const auto& b : optima) optimal.insert(b.assign);
  double worst = 0.0;
  bool closed = true;
  for (const auto& b : optima) {
    for (int a = 0; a < 4; ++a) {
      for (int c = 0; c < 4; ++c) {
        const auto moved = codebook_transport(p, b, std::vector<int>{a, c});
        worst = std::max(worst, std::abs(moved.delta_total));
        closed = closed && optimal.count(moved.codebook.assign) == 1;
      }
    }
  }
  return {closed && worst < 1e-12,
          fmt::format("{} optima, max |dL| {:.3g}, L={:.12g}", optima.size(), worst, optima.front().cost.total)};
}

DiscreteProblem benchmark_problem() {
  const ProblemConfig cfg(1, 2);
  DiscretizeOptions o;
  o.box = Box{{-2.0, -3.0}, {2.0, 3.0}};
  o.resolution = {16, 16};
  return discretize(cfg, PriorSpec::scale_free(cfg), o);
}

Outcome criterion9() {
  const auto p = benchmark_problem();
  LocalSearchOptions opts;
  opts.seed = 9;
  const auto book = smml_local_search(p, opts);
  const auto overlap = smml_ip_overlap(p, book, 2);
  const auto audit = region_mass_audit(p, book);
  return {overlap.fraction_within_one_region_diameter >= 0.9,
          fmt::format("fraction {:.4f} over {} interior cells, {} regions, L={:.10g}",
                      overlap.fraction_within_one_region_diameter, overlap.interior_cells.size(), audit.regions,
                      book.cost.total)};
}

Outcome criterion10(const std::string& first_csv) {
  const std::string second = sweep_csv();
  std::ostringstream a, b;
  const auto p = benchmark_problem();
  LocalSearchOptions opts;
  opts.seed = 9;
  write_codebook(a, smml_local_search(p, opts));
  write_codebook(b, smml_local_search(p, opts));
  return {second == first_csv && a.str() == b.str(), fmt::format("{} bytes of sweep CSV", first_csv.size())};
}

}  // namespace

int main(int argc, char** argv) {
  std::string output_dir;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--output-dir") == 0 && i + 1 < argc) {
      output_dir = argv[++i];
    } else {
      fmt::print(stderr, "usage: acceptance [--output-dir DIR]\n");
      return 2;
    }
  }

  const std::string csv = sweep_csv();
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"consistency dichotomy", criterion1},
      {"Jeffreys-prior coincidences", criterion2},
      {"joint vs marginal sigma2", criterion3},
      {"regularity suite", criterion4},
      {"marginal closed forms", criterion5},
      {"locality certificate", criterion6},
      {"local search vs exhaustive", criterion7},
      {"torus transport", criterion8},
      {"SMML near IP", criterion9},
      {"determinism", [&] { return criterion10(csv); }},
  };

  std::ostringstream summary;
  summary << "criterion,name,result\n";
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all = all && out.pass;
    fmt::print("{} {:2} {}: {} [{:.1f}s]\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, out.detail, secs);
    std::fflush(stdout);
    summary << (i + 1) << ',' << criteria[i].first << ',' << (out.pass ? "PASS" : "FAIL") << '\n';
  }

  if (!output_dir.empty()) {
    std::filesystem::create_directories(output_dir);
    std::ofstream(std::filesystem::path(output_dir) / "acceptance_sweep.csv") << csv;
    std::ofstream(std::filesystem::path(output_dir) / "acceptance_summary.csv") << summary.str();
  }
  return all ? 0 : 1;
}
