// nsmml: command-line front end for the Neyman-Scott estimators, regularity
// checks, locality certificates and discrete SMML runs.
//
// Tables go out as CSV and reports as structured text; --json switches both to
// JSON. NSMML_SEED and NSMML_OUTPUT_DIR override the defaults for --seed and
// --output-dir; explicit flags win. Exit status is 0 on success, 1 when a check
// fails and 2 on bad input.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nsmml/estimators.hpp"
#include "nsmml/harness.hpp"
#include "nsmml/model.hpp"
#include "nsmml/random.hpp"
#include "nsmml/regularity.hpp"
#include "nsmml/report.hpp"
#include "nsmml/smml.hpp"

namespace {

using namespace nsmml;

constexpr int kCheckFailed = 1;
constexpr int kBadInput = 2;

struct Output {
  bool json = false;
  std::string output_dir;
  std::string out_file;

  // Writes to --out (relative to the output directory), else to
  // <output-dir>/<default_name>, else to stdout.
  void emit(const std::string& text, const std::string& default_name) const {
    std::filesystem::path target;
    if (!out_file.empty()) {
      target = out_file;
      if (!output_dir.empty() && target.is_relative()) target = std::filesystem::path(output_dir) / target;
    } else if (!output_dir.empty()) {
      target = std::filesystem::path(output_dir) / default_name;
    }
    if (target.empty()) {
      std::cout << text;
      std::cout.flush();
      return;
    }
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    std::ofstream file(target, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write '" + target.string() + "'");
    file << text;
  }

  void report(std::string_view kind, const Report& body) const {
    emit(json ? render_json_report(kind, body) : render_text_report(kind, body),
         std::string(kind) + (json ? ".json" : ".txt"));
  }
};

std::vector<double> split_reals(const std::vector<std::string>& items) {
  std::vector<double> values;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (part.empty()) continue;
      std::size_t used = 0;
      const double v = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument("not a number: '" + part + "'");
      values.push_back(v);
    }
  }
  return values;
}

RawData read_raw_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<double> values;
  int rows = 0;
  int cols = -1;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& ch : line) {
      if (ch == ',') ch = ' ';
    }
    std::istringstream row(line);
    std::vector<double> row_values;
    std::string token;
    while (row >> token) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size()) throw std::runtime_error(fmt::format("{}:{}: malformed number '{}'", path, line_no, token));
      row_values.push_back(v);
    }
    if (row_values.empty()) continue;
    if (cols >= 0 && static_cast<int>(row_values.size()) != cols) {
      throw std::runtime_error(fmt::format("{}:{}: expected {} values per row", path, line_no, cols));
    }
    cols = static_cast<int>(row_values.size());
    values.insert(values.end(), row_values.begin(), row_values.end());
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("'" + path + "' holds no observations");
  return RawData(rows, cols, std::move(values));
}

std::string real(double v) { return fmt::format("{}", v); }

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  int group_size = 0;
  std::vector<std::string> means;
  double s2 = 0.0;
  std::string raw_file;
  std::string prior = "wallace";
  std::vector<std::string> methods{"all"};
};

int run_estimate(const EstimateArgs& args, const Output& output) {
  SufficientStat stat;
  std::optional<ProblemConfig> cfg;
  if (!args.raw_file.empty()) {
    const RawData data = read_raw_matrix(args.raw_file);
    if (args.group_size != 0 && args.group_size != data.cols()) {
      throw std::invalid_argument("--J does not match the number of columns in the raw matrix");
    }
    cfg.emplace(data.rows(), data.cols());
    stat = sufficient_stats(data, *cfg);
  } else {
    if (args.group_size == 0 || args.means.empty()) {
      throw std::invalid_argument("estimate needs --raw FILE or --J, --m and --s2");
    }
    stat.means = split_reals(args.means);
    stat.s2 = args.s2;
    cfg.emplace(static_cast<int>(stat.means.size()), args.group_size);
  }
  require_valid(stat, *cfg);
  const PriorSpec prior = PriorChoice::parse(args.prior).resolve(*cfg);

  std::vector<EstimatorKind> kinds;
  for (const auto& item : args.methods) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (part == "all") {
        kinds = {EstimatorKind::ML, EstimatorKind::IP, EstimatorKind::WF, EstimatorKind::Marginalized};
      } else {
        kinds.push_back(parse_estimator(part));
      }
    }
  }

  struct Line {
    EstimatorKind kind;
    std::optional<double> p;
    Parameter theta;
  };
  std::vector<Line> lines;
  for (auto kind : kinds) {
    Line line{kind, std::nullopt, {}};
    switch (kind) {
      case EstimatorKind::ML:
        line.theta = ml_estimate(stat, *cfg).theta;
        break;
      case EstimatorKind::IP:
        line.theta = ip_estimate(stat, prior, *cfg).theta;
        line.p = prior.exponent();
        break;
      case EstimatorKind::WF:
        line.theta = wf_estimate(stat, prior, *cfg).theta;
        line.p = prior.exponent();
        break;
      case EstimatorKind::Marginalized:
        line.theta = Parameter{marginalized_sigma2_ml(stat, *cfg), stat.means};
        break;
    }
    lines.push_back(std::move(line));
  }

  if (output.json) {
    Report body;
    body["N"] = cfg->num_groups();
    body["J"] = cfg->group_size();
    body["s2"] = stat.s2;
    body["estimates"] = Report::array();
    for (const auto& line : lines) {
      Report e;
      e["method"] = std::string(estimator_name(line.kind));
      e["prior_p"] = line.p ? Report(*line.p) : Report();
      e["sigma2"] = line.theta.sigma2;
      e["mu"] = line.theta.mu;
      body["estimates"].push_back(std::move(e));
    }
    output.report("estimate", body);
    return 0;
  }
  std::string csv = "method,prior_p,sigma2";
  for (int n = 1; n <= cfg->num_groups(); ++n) csv += fmt::format(",mu_{}", n);
  csv += '\n';
  for (const auto& line : lines) {
    csv += fmt::format("{},{},{}", estimator_name(line.kind), line.p ? real(*line.p) : "NA", real(line.theta.sigma2));
    for (double m : line.theta.mu) csv += "," + real(m);
    csv += '\n';
  }
  output.emit(csv, "estimate.csv");
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  int num_groups = 1;
  int group_size = 2;
  double sigma2 = 1.0;
  std::string mu = "normal";
};

int run_simulate(const SimulateArgs& args, std::uint64_t seed, const Output& output) {
  const ProblemConfig cfg(args.num_groups, args.group_size);
  MuLaw law;
  if (args.mu == "normal") {
    law.kind = MuLaw::Kind::Normal;
  } else if (args.mu == "zero") {
    law.kind = MuLaw::Kind::Zero;
  } else {
    law.kind = MuLaw::Kind::Fixed;
    law.values = split_reals({args.mu});
  }
  Rng rng(seed);
  const auto mu = law.draw(cfg.num_groups(), args.sigma2, rng);
  const RawData data = simulate(cfg, args.sigma2, mu, rng);
  if (output.json) {
    Report body;
    body["N"] = cfg.num_groups();
    body["J"] = cfg.group_size();
    body["sigma2_true"] = args.sigma2;
    body["seed"] = seed;
    body["mu_true"] = mu;
    body["data"] = Report::array();
    for (int n = 0; n < data.rows(); ++n) {
      const auto row = data.row(n);
      body["data"].push_back(std::vector<double>(row.begin(), row.end()));
    }
    output.report("simulate", body);
    return 0;
  }
  std::string csv;
  for (int n = 0; n < data.rows(); ++n) {
    for (int j = 0; j < data.cols(); ++j) csv += (j ? "," : "") + real(data(n, j));
    csv += '\n';
  }
  output.emit(csv, "simulate.csv");
  return 0;
}

// ---------------------------------------------------------------- sweep

int run_sweep_command(const std::string& config, std::optional<std::uint64_t> seed, const Output& output) {
  SweepSpec spec = parse_sweep_config_file(config);
  if (seed) spec.seed = *seed;
  const auto rows = run_sweep(spec);
  std::ostringstream out;
  if (output.json) {
    write_sweep_json(out, spec, rows);
    output.emit(out.str(), "sweep.json");
  } else {
    write_sweep_csv(out, rows);
    output.emit(out.str(), "sweep.csv");
  }
  return 0;
}

// ---------------------------------------------------------------- regularity

struct RegularityArgs {
  int num_groups = 2;
  int group_size = 2;
  std::string prior = "scale-free";
  std::vector<std::string> checks{"all"};
  int samples = 100;
  double tol = 1e-9;
};

Report drift_report(const DriftFit& drift) {
  Report r;
  r["predicted_slope"] = drift.predicted_slope;
  r["fitted_slope"] = drift.fitted_slope;
  r["intercept"] = drift.intercept;
  r["max_residual"] = drift.max_residual;
  return r;
}

int run_regularity(const RegularityArgs& args, std::uint64_t seed, const Output& output) {
  const ProblemConfig cfg(args.num_groups, args.group_size);
  const PriorSpec prior = PriorChoice::parse(args.prior).resolve(cfg);
  if (args.samples < 2) throw std::invalid_argument("--samples must be at least 2");

  bool want_h = false;
  bool want_c = false;
  bool want_a = false;
  for (const auto& item : args.checks) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (part == "all") {
        want_h = want_c = want_a = true;
      } else if (part == "homogeneity") {
        want_h = true;
      } else if (part == "comprehensiveness") {
        want_c = true;
      } else if (part == "automorphism") {
        want_a = true;
      } else {
        throw std::invalid_argument("unknown check '" + part + "'");
      }
    }
  }

  Rng rng(seed, {0x7e9});
  std::vector<Parameter> thetas;
  std::vector<SufficientStat> stats;
  for (int i = 0; i < args.samples; ++i) {
    Parameter theta{std::exp(rng.uniform(-3.0, 3.0)), {}};
    SufficientStat stat{{}, std::exp(rng.uniform(-3.0, 3.0))};
    for (int n = 0; n < cfg.num_groups(); ++n) {
      theta.mu.push_back(rng.normal(0.0, 3.0));
      stat.means.push_back(rng.normal(0.0, 3.0));
    }
    thetas.push_back(std::move(theta));
    stats.push_back(std::move(stat));
  }

  Report body;
  body["N"] = cfg.num_groups();
  body["J"] = cfg.group_size();
  body["prior_p"] = prior.exponent();
  body["samples"] = args.samples;
  body["tolerance"] = args.tol;
  std::vector<std::string> failures;

  if (want_h) {
    const auto h = homogeneity_check(prior, cfg, thetas, args.tol);
    Report r;
    r["holds"] = h.is_homogeneous;
    r["spread"] = h.spread;
    r["drift"] = drift_report(h.drift);
    body["homogeneity"] = r;
    if (!h.is_homogeneous) {
      failures.push_back(fmt::format("homogeneity fails: R* drifts as {} log sigma^2 (residual {:.3g})",
                                     h.drift.predicted_slope, h.drift.max_residual));
    }
  }
  if (want_c) {
    const auto c = comprehensiveness_check(prior, cfg, stats, args.tol);
    Report r;
    r["holds"] = c.is_comprehensive;
    r["spread"] = c.spread;
    r["drift"] = drift_report(c.drift);
    body["comprehensiveness"] = r;
    if (!c.is_comprehensive) {
      failures.push_back(fmt::format("comprehensiveness fails: R_opt drifts as {} log s^2 (residual {:.3g})",
                                     c.drift.predicted_slope, c.drift.max_residual));
    }
  }
  if (want_a) {
    Report list = Report::array();
    bool all_ok = true;
    for (int i = 0; i < 4; ++i) {
      Automorphism aut;
      aut.alpha = i == 0 ? 1.0 : std::exp(rng.uniform(-1.5, 1.5));
      for (int n = 0; n < cfg.num_groups(); ++n) aut.beta.push_back(rng.normal(0.0, 2.0));
      const auto rep = check_automorphism(aut, prior, cfg, 50, seed + static_cast<std::uint64_t>(i), 1e-9);
      Report r;
      r["alpha"] = aut.alpha;
      r["beta"] = aut.beta;
      r["marginal_ok"] = rep.marginal_ok;
      r["likelihood_ok"] = rep.likelihood_ok;
      r["max_marginal_violation"] = rep.max_marginal_violation;
      r["predicted_marginal_violation"] = rep.predicted_marginal_violation;
      list.push_back(std::move(r));
      if (!rep.marginal_ok || !rep.likelihood_ok) {
        all_ok = false;
        failures.push_back(fmt::format("scale-translation alpha={:.6g} is not an automorphism (marginal off by {:.6g})",
                                        aut.alpha, rep.max_marginal_violation));
      }
    }
    body["automorphisms"] = std::move(list);
    body["automorphisms_hold"] = all_ok;
  }
  body["ok"] = failures.empty();
  output.report("regularity", body);
  if (!failures.empty()) {
    for (const auto& f : failures) std::cerr << "regularity: " << f << '\n';
    return kCheckFailed;
  }
  return 0;
}

// ---------------------------------------------------------------- locality

struct LocalityArgs {
  int num_groups = 2;
  int group_size = 2;
  double sigma2 = 1.0;
  std::vector<std::string> mu;
  std::int64_t c = 0;
  LocalityGrid grid;
};

int run_locality(const LocalityArgs& args, const Output& output) {
  const ProblemConfig cfg(args.num_groups, args.group_size);
  Parameter theta{args.sigma2, args.mu.empty() ? std::vector<double>(static_cast<std::size_t>(cfg.num_groups()), 0.0)
                                               : split_reals(args.mu)};
  require_valid(theta, cfg);
  std::int64_t c = args.c;
  if (c == 0) {
    const auto found = find_valid_c(cfg);
    if (!found) {
      Report body;
      body["N"] = cfg.num_groups();
      body["J"] = cfg.group_size();
      body["ok"] = false;
      body["reason"] = "no c satisfies (c+1)^N >= c^N + 2N + 2";
      output.report("locality", body);
      std::cerr << "locality: no valid c exists for N=" << cfg.num_groups() << '\n';
      return kCheckFailed;
    }
    c = *found;
  }
  const LocalityCertificate cert(theta, cfg, c);
  const auto rep = verify_locality(cert, args.grid);
  Report body;
  body["N"] = cfg.num_groups();
  body["J"] = cfg.group_size();
  body["theta"] = {{"sigma2", theta.sigma2}, {"mu", theta.mu}};
  body["c"] = c;
  body["competitors"] = cert.competitor_count();
  body["margin_T"] = cert.margin();
  body["upper_ratio"] = cert.upper_ratio();
  body["lower_ratio"] = cert.lower_ratio();
  body["v0_bound"] = rep.v0_bound;
  body["exterior_points"] = rep.exterior_points;
  body["exempt_points"] = rep.exempt_points;
  body["worst_excess"] = rep.worst_excess;
  body["witness"] = {{"s2", rep.witness.s2}, {"means", rep.witness.means}};
  body["ok"] = rep.ok;
  output.report("locality", body);
  if (!rep.ok) {
    std::cerr << fmt::format("locality: margin inequality fails at s2={} (excess {})\n", rep.witness.s2,
                             rep.worst_excess);
    return kCheckFailed;
  }
  return 0;
}

// ---------------------------------------------------------------- smml

struct SmmlArgs {
  int num_groups = 1;
  int group_size = 2;
  std::string prior = "scale-free";
  std::string topology = "box";
  std::vector<std::string> lo;
  std::vector<std::string> hi;
  std::vector<int> resolution;
  std::string problem_in;
  std::string problem_out;
  std::string codebook_out;
  bool exhaustive = false;
  int restarts = 8;
  int margin = 2;
  std::vector<int> shift;
};

int run_smml(const SmmlArgs& args, std::uint64_t seed, const Output& output) {
  std::optional<DiscreteProblem> problem;
  if (!args.problem_in.empty()) {
    std::ifstream in(args.problem_in);
    if (!in) throw std::runtime_error("cannot open '" + args.problem_in + "'");
    problem.emplace(read_problem(in));
  } else {
    const ProblemConfig cfg(args.num_groups, args.group_size);
    const PriorSpec prior = PriorChoice::parse(args.prior).resolve(cfg);
    const auto dims = static_cast<std::size_t>(cfg.num_groups()) + 1;
    DiscretizeOptions options;
    if (args.topology == "box") {
      options.topology = Topology::Box;
    } else if (args.topology == "torus") {
      options.topology = Topology::Torus;
    } else {
      throw std::invalid_argument("--topology must be box or torus");
    }
    options.box.lo = args.lo.empty() ? std::vector<double>(dims, -1.0) : split_reals(args.lo);
    options.box.hi = args.hi.empty() ? std::vector<double>(dims, 1.0) : split_reals(args.hi);
    options.resolution = args.resolution.empty() ? std::vector<int>(dims, 8) : args.resolution;
    if (options.resolution.size() == 1) options.resolution.assign(dims, options.resolution.front());
    problem.emplace(discretize(cfg, prior, options));
  }
  if (!args.problem_out.empty()) {
    std::ofstream out(args.problem_out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + args.problem_out + "'");
    write_problem(out, *problem);
  }

  const Codebook pointwise = pointwise_codebook(*problem);
  Codebook best;
  std::size_t optimal_count = 0;
  if (args.exhaustive) {
    const auto optima = smml_exhaustive(*problem);
    best = optima.front();
    optimal_count = optima.size();
  } else {
    LocalSearchOptions opts;
    opts.restarts = args.restarts;
    opts.seed = seed;
    best = smml_local_search(*problem, opts);
  }
  if (!args.codebook_out.empty()) {
    std::ofstream out(args.codebook_out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + args.codebook_out + "'");
    write_codebook(out, best);
  }

  std::vector<std::string> failures;
  if (best.cost.total > pointwise.cost.total + 1e-12) failures.push_back("code-book costs more than the pointwise one");
  if (std::abs(best.cost.total - best.cost.entropy - best.cost.penalty) > 1e-12) {
    failures.push_back("cost identity L = L_E + L_P violated");
  }

  Report body;
  body["cells"] = problem->num_cells();
  body["candidates"] = problem->num_candidates();
  if (problem->prior()) body["prior_p"] = problem->prior()->exponent();
  body["solver"] = args.exhaustive ? "exhaustive" : "local-search";
  if (args.exhaustive) {
    body["optimal_codebooks"] = optimal_count;
  } else {
    body["restarts"] = args.restarts;
    body["seed"] = seed;
  }
  body["cost"] = {{"entropy", best.cost.entropy}, {"penalty", best.cost.penalty}, {"total", best.cost.total}};
  body["pointwise_total"] = pointwise.cost.total;
  const auto audit = region_mass_audit(*problem, best);
  body["audit"] = {{"regions", audit.regions}, {"max_region_mass", audit.max_region_mass},
                   {"histogram", audit.histogram}};
  if (problem->lattice()) {
    const auto overlap = smml_ip_overlap(*problem, best, args.margin);
    body["overlap"] = {{"interior_margin", args.margin},
                       {"interior_cells", overlap.interior_cells.size()},
                       {"fraction_within_one_region_diameter", overlap.fraction_within_one_region_diameter}};
    if (!args.shift.empty()) {
      const auto moved = codebook_transport(*problem, best, args.shift);
      body["transport"] = {{"shift", args.shift},
                           {"delta_total", moved.delta_total},
                           {"bound", moved.bound},
                           {"exact", moved.exact}};
      const double allowed = moved.exact ? 1e-12 : moved.bound + 1e-12;
      if (std::abs(moved.delta_total) > allowed) failures.push_back("transport changed L beyond its bound");
    }
  }
  body["assign"] = best.assign;
  body["ok"] = failures.empty();
  output.report("smml", body);
  if (!failures.empty()) {
    for (const auto& f : failures) std::cerr << "smml: " << f << '\n';
    return kCheckFailed;
  }
  return 0;
}

std::optional<std::uint64_t> env_seed() {
  const char* value = std::getenv("NSMML_SEED");
  if (!value || !*value) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(value, &used, 0);
    if (used == std::string(value).size()) return seed;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(std::string("NSMML_SEED is not an unsigned integer: '") + value + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neyman-Scott estimators, regularity checks and discrete SMML"};
  app.require_subcommand(1);

  Output output;
  std::uint64_t seed = 0;
  app.add_flag("--json", output.json, "Emit JSON instead of CSV / structured text");
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (env NSMML_SEED)");
  auto* dir_opt = app.add_option("--output-dir", output.output_dir, "Directory for outputs (env NSMML_OUTPUT_DIR)");
  app.add_option("--out", output.out_file, "Output file name");
  app.fallthrough();

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate sigma^2 and mu from a statistic or a raw matrix");
  estimate->add_option("--J", est.group_size, "Observations per group");
  estimate->add_option("--m", est.means, "Group means (comma separated)");
  estimate->add_option("--s2", est.s2, "Pooled within-group variance (divisor NJ)");
  estimate->add_option("--raw", est.raw_file, "Raw N x J matrix, one group per line");
  estimate->add_option("--prior", est.prior, "wallace, scale-free or an exponent p >= 1");
  estimate->add_option("--method", est.methods, "ml, ip, wf, marginalized or all");

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Draw an N x J data matrix");
  simulate_cmd->add_option("--N", sim.num_groups, "Number of groups")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--J", sim.group_size, "Observations per group");
  simulate_cmd->add_option("--sigma2", sim.sigma2, "True variance");
  simulate_cmd->add_option("--mu", sim.mu, "normal, zero, or comma-separated fixed means");

  std::string sweep_config;
  auto* sweep = app.add_subcommand("sweep", "Run an estimator sweep from a config file");
  sweep->add_option("--config", sweep_config, "Sweep configuration file")->required();

  RegularityArgs reg;
  auto* regularity = app.add_subcommand("regularity", "Homogeneity, comprehensiveness and automorphism checks");
  regularity->add_option("--N", reg.num_groups, "Number of groups")->check(CLI::PositiveNumber);
  regularity->add_option("--J", reg.group_size, "Observations per group");
  regularity->add_option("--prior", reg.prior, "wallace, scale-free or an exponent p >= 1");
  regularity->add_option("--check", reg.checks, "homogeneity, comprehensiveness, automorphism or all");
  regularity->add_option("--samples", reg.samples, "Random parameters / statistics per check");
  regularity->add_option("--tol", reg.tol, "Spread tolerance");

  LocalityArgs loc;
  auto* locality = app.add_subcommand("locality", "Build and verify a locality certificate (scale-free prior)");
  locality->add_option("--N", loc.num_groups, "Number of groups")->check(CLI::PositiveNumber);
  locality->add_option("--J", loc.group_size, "Observations per group");
  locality->add_option("--sigma2", loc.sigma2, "sigma^2 of the certified parameter");
  locality->add_option("--mu", loc.mu, "Means of the certified parameter (default 0)");
  locality->add_option("--c", loc.c, "Grid constant (default: smallest valid)");
  locality->add_option("--points", loc.grid.points_per_axis, "Grid points per axis");
  locality->add_option("--padding", loc.grid.log_ratio_padding, "Extra log(s / sigma) range");
  locality->add_option("--offset-factor", loc.grid.offset_factor, "Mean offset range in units of sigma sqrt(2T)");

  SmmlArgs sm;
  auto* smml = app.add_subcommand("smml", "Build, solve, audit and serialise a discrete SMML problem");
  smml->add_option("--N", sm.num_groups, "Number of groups")->check(CLI::PositiveNumber);
  smml->add_option("--J", sm.group_size, "Observations per group");
  smml->add_option("--prior", sm.prior, "wallace, scale-free or an exponent p >= 1");
  smml->add_option("--topology", sm.topology, "box or torus");
  smml->add_option("--lo", sm.lo, "Lower box corner in (log s, m / s)");
  smml->add_option("--hi", sm.hi, "Upper box corner in (log s, m / s)");
  smml->add_option("--resolution", sm.resolution, "Cells per axis (one value or one per axis)")->delimiter(',');
  smml->add_option("--problem-in", sm.problem_in, "Read the problem from a file instead");
  smml->add_option("--problem-out", sm.problem_out, "Write the problem to a file");
  smml->add_option("--codebook-out", sm.codebook_out, "Write the code-book to a file");
  smml->add_flag("--exhaustive", sm.exhaustive, "Exact search (small problems only)");
  smml->add_option("--restarts", sm.restarts, "Local-search restarts");
  smml->add_option("--margin", sm.margin, "Interior margin for the overlap report");
  smml->add_option("--shift", sm.shift, "Lattice shift for a transport check")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const std::optional<std::uint64_t> seed_override = seed_opt->count() ? std::optional(seed) : env_seed();
    seed = seed_override.value_or(0);
    if (dir_opt->count() == 0) {
      if (const char* dir = std::getenv("NSMML_OUTPUT_DIR"); dir && *dir) output.output_dir = dir;
    }
    if (*estimate) return run_estimate(est, output);
    if (*simulate_cmd) return run_simulate(sim, seed, output);
    if (*sweep) {
      return run_sweep_command(sweep_config, seed_override, output);
    }
    if (*regularity) return run_regularity(reg, seed, output);
    if (*locality) return run_locality(loc, output);
    if (*smml) return run_smml(sm, seed, output);
  } catch (const std::exception& e) {
    std::cerr << "nsmml: error: " << e.what() << '\n';
    return kBadInput;
  }
  return 0;
}
