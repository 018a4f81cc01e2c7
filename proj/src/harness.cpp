#include "nsmml/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "nsmml/detail/parallel.hpp"
#include "nsmml/estimators.hpp"

namespace nsmml {

namespace {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r");
  return std::string(text.substr(first, last - first + 1));
}

std::string lower(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
  return text;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> items;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string_view::npos ? text.size() : comma;
    auto item = trim(text.substr(start, end - start));
    if (!item.empty()) items.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return items;
}

double parse_real(const std::string& text) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("not a number: '" + text + "'");
  }
  if (used != text.size()) throw std::invalid_argument("not a number: '" + text + "'");
  return value;
}

long long parse_integer(const std::string& text) {
  std::size_t used = 0;
  long long value = 0;
  try {
    value = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("not an integer: '" + text + "'");
  }
  if (used != text.size()) throw std::invalid_argument("not an integer: '" + text + "'");
  return value;
}

std::uint64_t parse_unsigned(const std::string& text) {
  std::size_t used = 0;
  unsigned long long value = 0;
  if (!text.empty() && text.front() == '-') throw std::invalid_argument("must not be negative: '" + text + "'");
  try {
    value = std::stoull(text, &used, 0);
  } catch (const std::exception&) {
    throw std::invalid_argument("not an unsigned integer: '" + text + "'");
  }
  if (used != text.size()) throw std::invalid_argument("not an unsigned integer: '" + text + "'");
  return value;
}

std::string format_real(double value) { return fmt::format("{:.12g}", value); }

}  // namespace

RawData simulate(const ProblemConfig& cfg, double sigma2_true, const std::vector<double>& mu_true, Rng& rng) {
  if (!(sigma2_true > 0.0) || !std::isfinite(sigma2_true)) {
    throw std::invalid_argument("simulate: sigma2_true must be positive");
  }
  if (mu_true.size() != static_cast<std::size_t>(cfg.num_groups())) {
    throw std::invalid_argument("simulate: need one true mean per group");
  }
  const double sigma = std::sqrt(sigma2_true);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(cfg.total_observations()));
  for (int n = 0; n < cfg.num_groups(); ++n) {
    for (int j = 0; j < cfg.group_size(); ++j) values.push_back(rng.normal(mu_true[static_cast<std::size_t>(n)], sigma));
  }
  return RawData(cfg.num_groups(), cfg.group_size(), std::move(values));
}

RawData simulate(const ProblemConfig& cfg, double sigma2_true, const std::vector<double>& mu_true,
                 std::uint64_t seed) {
  Rng rng(seed);
  return simulate(cfg, sigma2_true, mu_true, rng);
}

std::vector<double> MuLaw::draw(int num_groups, double sigma2_true, Rng& rng) const {
  std::vector<double> mu(static_cast<std::size_t>(num_groups), 0.0);
  switch (kind) {
    case Kind::Normal: {
      const double sigma = std::sqrt(sigma2_true);
      for (auto& m : mu) m = sigma * rng.normal();
      break;
    }
    case Kind::Zero:
      break;
    case Kind::Fixed:
      if (values.empty()) throw std::invalid_argument("mu_law fixed needs at least one value");
      for (std::size_t n = 0; n < mu.size(); ++n) mu[n] = values[n % values.size()];
      break;
  }
  return mu;
}

std::string MuLaw::describe() const {
  switch (kind) {
    case Kind::Normal:
      return "normal";
    case Kind::Zero:
      return "zero";
    case Kind::Fixed: {
      std::string text = "fixed:";
      for (std::size_t i = 0; i < values.size(); ++i) text += (i ? ", " : " ") + format_real(values[i]);
      return text;
    }
  }
  return "normal";
}

PriorSpec PriorChoice::resolve(const ProblemConfig& cfg) const {
  switch (kind) {
    case Kind::Wallace:
      return PriorSpec::wallace();
    case Kind::ScaleFree:
      return PriorSpec::scale_free(cfg);
    case Kind::Exponent:
      return PriorSpec(exponent);
  }
  return PriorSpec::wallace();
}

std::string PriorChoice::describe() const {
  switch (kind) {
    case Kind::Wallace:
      return "wallace";
    case Kind::ScaleFree:
      return "scale-free";
    case Kind::Exponent:
      return format_real(exponent);
  }
  return "wallace";
}

PriorChoice PriorChoice::parse(std::string_view text) {
  const std::string word = lower(trim(text));
  if (word == "wallace") return {Kind::Wallace, 1.0};
  if (word == "scale-free" || word == "scale_free" || word == "jeffreys") return {Kind::ScaleFree, 0.0};
  const double p = parse_real(word);
  PriorSpec check(p);  // validates p >= 1
  return {Kind::Exponent, check.exponent()};
}

std::string_view estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::ML:
      return "ML";
    case EstimatorKind::IP:
      return "IP";
    case EstimatorKind::WF:
      return "WF";
    case EstimatorKind::Marginalized:
      return "MARGINALIZED";
  }
  return "ML";
}

EstimatorKind parse_estimator(std::string_view text) {
  std::string word = trim(text);
  std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::toupper(c); });
  if (word == "ML") return EstimatorKind::ML;
  if (word == "IP") return EstimatorKind::IP;
  if (word == "WF") return EstimatorKind::WF;
  if (word == "MARGINALIZED" || word == "MARGINALISED") return EstimatorKind::Marginalized;
  throw std::invalid_argument("unknown estimator '" + std::string(text) + "'");
}

bool estimator_uses_prior(EstimatorKind kind) { return kind == EstimatorKind::IP || kind == EstimatorKind::WF; }

void require_valid(const SweepSpec& spec) {
  if (spec.group_size < 2) throw std::invalid_argument("sweep: J must be at least 2");
  if (spec.num_groups.empty()) throw std::invalid_argument("sweep: N_list is empty");
  for (std::size_t i = 0; i < spec.num_groups.size(); ++i) {
    if (spec.num_groups[i] < 1) throw std::invalid_argument("sweep: N values must be positive");
    if (i > 0 && spec.num_groups[i] <= spec.num_groups[i - 1]) {
      throw std::invalid_argument("sweep: N_list must be strictly increasing");
    }
  }
  if (spec.trials < 1) throw std::invalid_argument("sweep: trials must be at least 1");
  if (!(spec.sigma2_true > 0.0) || !std::isfinite(spec.sigma2_true)) {
    throw std::invalid_argument("sweep: sigma2_true must be positive");
  }
  if (spec.mu_law.kind == MuLaw::Kind::Fixed && spec.mu_law.values.empty()) {
    throw std::invalid_argument("sweep: mu_law fixed needs values");
  }
  if (spec.estimators.empty()) throw std::invalid_argument("sweep: no estimators");
  const bool needs_prior = std::any_of(spec.estimators.begin(), spec.estimators.end(), estimator_uses_prior);
  if (needs_prior && spec.priors.empty()) throw std::invalid_argument("sweep: IP and WF need at least one prior");
}

double estimate_sigma2(EstimatorKind kind, const SufficientStat& stat, const std::optional<PriorSpec>& prior,
                       const ProblemConfig& cfg) {
  auto need_prior = [&]() -> const PriorSpec& {
    if (!prior) throw std::invalid_argument(std::string(estimator_name(kind)) + " needs a prior");
    return *prior;
  };
  switch (kind) {
    case EstimatorKind::ML:
      return ml_estimate(stat, cfg).theta.sigma2;
    case EstimatorKind::IP:
      return ip_estimate(stat, need_prior(), cfg).theta.sigma2;
    case EstimatorKind::WF:
      return wf_estimate(stat, need_prior(), cfg).theta.sigma2;
    case EstimatorKind::Marginalized:
      return marginalized_sigma2_ml(stat, cfg);
  }
  return 0.0;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  require_valid(spec);
  std::vector<SweepRow> rows;
  for (int n_groups : spec.num_groups) {
    const ProblemConfig cfg(n_groups, spec.group_size);

    struct Column {
      EstimatorKind kind;
      std::optional<PriorSpec> prior;
    };
    std::vector<Column> columns;
    for (EstimatorKind kind : spec.estimators) {
      if (estimator_uses_prior(kind)) {
        for (const auto& choice : spec.priors) columns.push_back({kind, choice.resolve(cfg)});
      } else {
        columns.push_back({kind, std::nullopt});
      }
    }

    // ratios[t * columns + c]; filled independently per trial, folded in order.
    const auto trials = static_cast<std::size_t>(spec.trials);
    std::vector<double> ratios(trials * columns.size());
    detail::parallel_for(trials, [&](std::size_t t) {
      Rng rng(spec.seed, {static_cast<std::uint64_t>(n_groups), spec.trial_offset + t});
      const auto mu = spec.mu_law.draw(n_groups, spec.sigma2_true, rng);
      const auto stat = sufficient_stats(simulate(cfg, spec.sigma2_true, mu, rng), cfg);
      for (std::size_t c = 0; c < columns.size(); ++c) {
        ratios[t * columns.size() + c] =
            estimate_sigma2(columns[c].kind, stat, columns[c].prior, cfg) / spec.sigma2_true;
      }
    });

    for (std::size_t c = 0; c < columns.size(); ++c) {
      double sum = 0.0;
      for (std::size_t t = 0; t < trials; ++t) sum += ratios[t * columns.size() + c];
      const double mean = sum / static_cast<double>(trials);
      double sq = 0.0;
      for (std::size_t t = 0; t < trials; ++t) {
        const double d = ratios[t * columns.size() + c] - mean;
        sq += d * d;
      }
      SweepRow row;
      row.num_groups = n_groups;
      row.estimator = columns[c].kind;
      if (columns[c].prior) row.prior_exponent = columns[c].prior->exponent();
      row.mean_ratio = mean;
      row.sd_ratio = trials > 1 ? std::sqrt(sq / static_cast<double>(trials - 1)) : 0.0;
      row.trials = spec.trials;
      rows.push_back(row);
    }
  }
  return rows;
}

SweepSpec parse_sweep_config(std::istream& in) {
  SweepSpec spec;
  bool have_j = false;
  bool have_n = false;
  bool have_trials = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    try {
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("expected 'key = value'");
      const std::string key = lower(trim(std::string_view(body).substr(0, eq)));
      const std::string value = trim(std::string_view(body).substr(eq + 1));
      if (value.empty()) throw std::invalid_argument("empty value for '" + key + "'");
      if (key == "j") {
        spec.group_size = static_cast<int>(parse_integer(value));
        have_j = true;
      } else if (key == "n_list") {
        spec.num_groups.clear();
        for (const auto& item : split_list(value)) spec.num_groups.push_back(static_cast<int>(parse_integer(item)));
        have_n = true;
      } else if (key == "trials") {
        spec.trials = static_cast<int>(parse_integer(value));
        have_trials = true;
      } else if (key == "trial_offset") {
        spec.trial_offset = parse_unsigned(value);
      } else if (key == "sigma2_true") {
        spec.sigma2_true = parse_real(value);
      } else if (key == "mu_law") {
        const std::string word = lower(value);
        if (word == "normal") {
          spec.mu_law = {MuLaw::Kind::Normal, {}};
        } else if (word == "zero") {
          spec.mu_law = {MuLaw::Kind::Zero, {}};
        } else if (word.rfind("fixed", 0) == 0) {
          const auto colon = value.find(':');
          if (colon == std::string::npos) throw std::invalid_argument("mu_law fixed needs ': v1, v2, ...'");
          MuLaw law{MuLaw::Kind::Fixed, {}};
          for (const auto& item : split_list(std::string_view(value).substr(colon + 1))) {
            law.values.push_back(parse_real(item));
          }
          spec.mu_law = std::move(law);
        } else {
          throw std::invalid_argument("unknown mu_law '" + value + "'");
        }
      } else if (key == "estimators") {
        spec.estimators.clear();
        for (const auto& item : split_list(value)) spec.estimators.push_back(parse_estimator(item));
      } else if (key == "priors") {
        spec.priors.clear();
        for (const auto& item : split_list(value)) spec.priors.push_back(PriorChoice::parse(item));
      } else if (key == "seed") {
        spec.seed = parse_unsigned(value);
      } else {
        throw std::invalid_argument("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(fmt::format("sweep config line {}: {}", line_no, e.what()));
    }
  }
  if (!have_j || !have_n || !have_trials) {
    throw std::runtime_error("sweep config: J, N_list and trials are required");
  }
  try {
    require_valid(spec);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("sweep config: ") + e.what());
  }
  return spec;
}

SweepSpec parse_sweep_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sweep config '" + path + "'");
  return parse_sweep_config(in);
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepCsvHeader << '\n';
  for (const auto& row : rows) {
    out << fmt::format("{},{},{},{},{},{}\n", row.num_groups, estimator_name(row.estimator),
                       row.prior_exponent ? format_real(*row.prior_exponent) : "NA", format_real(row.mean_ratio),
                       format_real(row.sd_ratio), row.trials);
  }
}

void write_sweep_json(std::ostream& out, const SweepSpec& spec, const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json doc;
  doc["format"] = "nsmml-sweep";
  doc["version"] = 1;
  auto& s = doc["spec"];
  s["J"] = spec.group_size;
  s["N_list"] = spec.num_groups;
  s["trials"] = spec.trials;
  s["trial_offset"] = spec.trial_offset;
  s["sigma2_true"] = spec.sigma2_true;
  s["mu_law"] = spec.mu_law.describe();
  s["estimators"] = nlohmann::ordered_json::array();
  for (auto e : spec.estimators) s["estimators"].push_back(std::string(estimator_name(e)));
  s["priors"] = nlohmann::ordered_json::array();
  for (const auto& p : spec.priors) s["priors"].push_back(p.describe());
  s["seed"] = spec.seed;
  s["trial_stream"] = "Rng(seed, {N, trial_offset + t})";
  doc["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json r;
    r["N"] = row.num_groups;
    r["estimator"] = std::string(estimator_name(row.estimator));
    r["prior_p"] = row.prior_exponent ? nlohmann::ordered_json(*row.prior_exponent) : nlohmann::ordered_json();
    r["mean_ratio"] = row.mean_ratio;
    r["sd_ratio"] = row.sd_ratio;
    r["trials"] = row.trials;
    doc["rows"].push_back(std::move(r));
  }
  out << doc.dump(2) << '\n';
}

}  // namespace nsmml
