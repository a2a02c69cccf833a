#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "polylab/harness.hpp"

namespace polylab {

namespace {

constexpr std::pair<ExperimentKind, const char*> kKinds[] = {
    {ExperimentKind::Simulate, "simulate"},   {ExperimentKind::Exponent, "exponent"},
    {ExperimentKind::Tail, "tail"},           {ExperimentKind::Overlap, "overlap"},
    {ExperimentKind::Moments, "moments"},     {ExperimentKind::Compare, "compare"},
    {ExperimentKind::Covariance, "covariance"}, {ExperimentKind::Doob, "doob"},
    {ExperimentKind::AppendixPhi, "appendix-phi"},
};

const std::set<std::string> kFields{"Z", "logZ", "overlap", "S", "K", "M", "s_delta", "S_delta", "k_delta", "K_delta_f"};

const std::set<std::string> kKeys{"experiment", "env", "seed", "dims", "n_grid", "replicas", "replica_offset",
                                  "mean_replicas", "mean_offset", "test_function", "delta", "fields",
                                  "truncation_sigmas", "cell_budget", "threads", "output", "u_grid", "p_grid",
                                  "separations", "inner_samples", "m_grid", "samples", "bootstrap_resamples",
                                  "confidence", "flat_slope"};

bool strictly_increasing(const auto& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

std::string experiment_name(ExperimentKind k) {
  for (const auto& [kind, name] : kKinds)
    if (kind == k) return name;
  return "unknown";
}

ExperimentKind parse_experiment(const std::string& s) {
  for (const auto& [kind, name] : kKinds)
    if (s == name) return kind;
  throw ConfigError("unknown experiment '" + s + "'");
}

bool SeedBlock::intersects(const SeedBlock& o) const {
  if (count == 0 || o.count == 0) return false;
  return first < o.first + o.count && o.first < first + count;
}

EnvSpec ExperimentConfig::env() const {
  try {
    return EnvSpec::make(parse_family(family), beta, bernoulli_p, uniform_a, uniform_b);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

PolymerSystem ExperimentConfig::system(std::uint64_t replica_seed) const {
  const EnvSpec e = env();
  PolymerSystem sys(e, replica_seed, dims);
  // beta = 0 keeps exact sweeps so trivial fields come out exactly
  return sys.with_truncation(e.beta == 0.0 ? Truncation{} : Truncation{truncation_sigmas, false});
}

std::uint64_t ExperimentConfig::replica_seed(std::uint64_t index) const { return mix64(seed ^ mix64(index)); }

void ExperimentConfig::validate() const {
  const EnvSpec e = env();
  require(e.beta >= 0.0 && std::isfinite(e.beta), "beta must be finite and nonnegative");
  require(dims >= 1 && dims <= kMaxDim, "dims must lie in 1..4");
  require(threads >= 1 && threads <= 1024, "threads must lie in 1..1024");
  require(cell_budget >= 1000, "cell_budget must be at least 1000");
  require(truncation_sigmas >= 0.0 && std::isfinite(truncation_sigmas), "truncation_sigmas must be >= 0");
  require(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0,1)");
  require(bootstrap_resamples == 0 || bootstrap_resamples >= 50, "bootstrap_resamples must be 0 or >= 50");
  require(delta > 0.0 && delta < 1.0 / 6.0, "delta must lie in (0, 1/6)");
  require(f.support > 0.0 && std::isfinite(f.support), "test function support must be positive");
  require(main_block.count >= 1, "replicas must be >= 1");
  require(main_block.first + main_block.count >= main_block.first, "replica block overflows");
  require(mean_block.first + mean_block.count >= mean_block.first, "mean-injection block overflows");
  require(!main_block.intersects(mean_block), "mean-injection seed block overlaps the measurement block");

  if (kind != ExperimentKind::AppendixPhi) {
    require(!n_grid.empty(), "n_grid must not be empty");
    require(n_grid.front() >= 1, "n_grid entries must be >= 1");
    require(strictly_increasing(n_grid), "n_grid must be strictly increasing");
  }
  const bool regression = kind == ExperimentKind::Exponent || kind == ExperimentKind::Overlap ||
                          kind == ExperimentKind::Compare || kind == ExperimentKind::Moments;
  if (regression) {
    require(replicas() >= 30, "regression experiments need replicas >= 30");
    require(n_grid.size() >= 3, "regression experiments need at least 3 grid points");
  }
  if (kind == ExperimentKind::Tail) {
    require(replicas() >= 10'000, "tail experiments need replicas >= 10000");
    require(!u_grid.empty() && u_grid.front() > 1.0 && strictly_increasing(u_grid),
            "u_grid must be strictly increasing with entries > 1");
  }
  if (kind == ExperimentKind::Overlap) require(replicas() >= 500, "overlap experiments need replicas >= 500");
  if (kind == ExperimentKind::Covariance) {
    require(replicas() >= 2000, "covariance experiments need replicas >= 2000");
    for (double r : separations) require(r >= 0.0 && std::isfinite(r), "separations must be >= 0");
  }
  if (kind == ExperimentKind::Moments) {
    require(!p_grid.empty() && strictly_increasing(p_grid), "p_grid must be strictly increasing");
    require(p_grid.front() >= 1.0 && p_grid.back() <= 4.0, "p_grid must lie in [1, 4]");
  }
  if (kind == ExperimentKind::Doob) require(inner_samples >= 1000, "inner_samples must be >= 1000");
  if (kind == ExperimentKind::AppendixPhi) {
    require(!m_grid.empty() && m_grid.front() >= 1 && strictly_increasing(m_grid),
            "m_grid must be strictly increasing with entries >= 1");
    require(samples >= 2, "samples must be >= 2");
  }
  if (kind == ExperimentKind::Simulate) {
    require(!fields.empty(), "fields must not be empty");
    for (const auto& fld : fields) require(kFields.count(fld) > 0, "unknown field '" + fld + "'");
  }
  bool needs_means = kind == ExperimentKind::Exponent || kind == ExperimentKind::Compare ||
                     kind == ExperimentKind::Doob;
  if (kind == ExperimentKind::Simulate)
    for (const auto& fld : fields) needs_means |= fld == "K" || fld == "k_delta" || fld == "K_delta_f";
  if (needs_means && e.beta > 0.0)
    require(mean_block.count >= 30, "K-type fields need mean_replicas >= 30 on a disjoint seed block");
}

json ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = experiment_name(kind);
  j["env"] = {{"family", family}, {"beta", beta}, {"bernoulli_p", bernoulli_p}, {"uniform_a", uniform_a},
              {"uniform_b", uniform_b}};
  j["seed"] = seed;
  j["dims"] = dims;
  j["n_grid"] = n_grid;
  j["replicas"] = main_block.count;
  j["replica_offset"] = main_block.first;
  j["mean_replicas"] = mean_block.count;
  j["mean_offset"] = mean_block.first;
  j["test_function"] = {{"kind", f.name()}, {"support", f.support}};
  j["delta"] = delta;
  j["fields"] = fields;
  j["truncation_sigmas"] = truncation_sigmas;
  j["cell_budget"] = cell_budget;
  j["threads"] = threads;
  j["output"] = output;
  j["u_grid"] = u_grid;
  j["p_grid"] = p_grid;
  j["separations"] = separations;
  j["inner_samples"] = inner_samples;
  j["m_grid"] = m_grid;
  j["samples"] = samples;
  j["bootstrap_resamples"] = bootstrap_resamples;
  j["confidence"] = confidence;
  j["flat_slope"] = flat_slope;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& in) {
  const json& j = in.contains("config") && in["config"].is_object() ? in["config"] : in;
  require(j.is_object(), "config must be a JSON object");
  for (const auto& [key, _] : j.items()) require(kKeys.count(key) > 0, "unknown config key '" + key + "'");
  ExperimentConfig c;
  try {
    if (j.contains("experiment")) c.kind = parse_experiment(j["experiment"].get<std::string>());
    if (j.contains("env")) {
      const json& e = j["env"];
      for (const auto& [key, _] : e.items())
        require(key == "family" || key == "beta" || key == "bernoulli_p" || key == "uniform_a" || key == "uniform_b",
                "unknown env key '" + key + "'");
      c.family = e.value("family", c.family);
      c.beta = e.value("beta", c.beta);
      c.bernoulli_p = e.value("bernoulli_p", c.bernoulli_p);
      c.uniform_a = e.value("uniform_a", c.uniform_a);
      c.uniform_b = e.value("uniform_b", c.uniform_b);
    }
    c.seed = j.value("seed", c.seed);
    c.dims = j.value("dims", c.dims);
    c.n_grid = j.value("n_grid", c.n_grid);
    c.main_block.count = j.value("replicas", c.main_block.count);
    c.main_block.first = j.value("replica_offset", c.main_block.first);
    c.mean_block.count = j.value("mean_replicas", c.mean_block.count);
    c.mean_block.first = j.value("mean_offset", c.mean_block.first);
    if (j.contains("test_function")) {
      const json& t = j["test_function"];
      if (t.contains("kind")) c.f.kind = TestFunction::parse_kind(t["kind"].get<std::string>());
      c.f.support = t.value("support", c.f.support);
    }
    c.delta = j.value("delta", c.delta);
    c.fields = j.value("fields", c.fields);
    c.truncation_sigmas = j.value("truncation_sigmas", c.truncation_sigmas);
    c.cell_budget = j.value("cell_budget", c.cell_budget);
    c.threads = j.value("threads", c.threads);
    c.output = j.value("output", c.output);
    c.u_grid = j.value("u_grid", c.u_grid);
    c.p_grid = j.value("p_grid", c.p_grid);
    c.separations = j.value("separations", c.separations);
    c.inner_samples = j.value("inner_samples", c.inner_samples);
    c.m_grid = j.value("m_grid", c.m_grid);
    c.samples = j.value("samples", c.samples);
    c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
    c.confidence = j.value("confidence", c.confidence);
    c.flat_slope = j.value("flat_slope", c.flat_slope);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
  return from_json(j);
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("threads");
  j.erase("output");
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double compute_xi(double pstar, int d) {
  if (!(pstar > 1.0)) throw std::domain_error("compute_xi: p* must exceed 1");
  if (d < 1) throw std::domain_error("compute_xi: d must be >= 1");
  return 0.5 * d - (1.0 + 0.5 * d) / std::min(pstar, 2.0);
}

}  // namespace polylab
