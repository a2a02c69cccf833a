#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

#include "polylab/harness.hpp"

using namespace polylab;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kBudget = 3, kCheck = 4 };

struct Overrides {
  std::string config;
  std::string out;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> replicas;
  std::optional<int> dims;
  std::optional<double> beta;
  std::optional<std::string> family;
  std::optional<std::string> n_grid;
  std::optional<double> delta;
  bool check = false;
};

std::vector<std::int64_t> parse_grid(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad --n-grid entry '" + item + "'");
    }
  }
  return out;
}

ExperimentConfig build_config(ExperimentKind kind, const Overrides& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(o.config);
  cfg.kind = kind;
  if (!o.out.empty()) cfg.output = o.out;
  if (o.threads) cfg.threads = *o.threads;
  if (o.seed) cfg.seed = *o.seed;
  if (o.replicas) cfg.main_block.count = *o.replicas;
  if (o.dims) cfg.dims = *o.dims;
  if (o.beta) cfg.beta = *o.beta;
  if (o.family) cfg.family = *o.family;
  if (o.n_grid) cfg.n_grid = parse_grid(*o.n_grid);
  if (o.delta) cfg.delta = *o.delta;
  return cfg;
}

void print_report(const EnsembleResult& r) {
  std::cout << experiment_name(r.config.kind) << "  config " << r.config.hash() << "  " << r.wall_seconds << " s\n";
  for (const auto& f : r.fits)
    std::cout << "  fit " << f.name << ": slope " << f.fit.slope << "  CI [" << f.ci.lo << ", " << f.ci.hi
              << "]  R2 " << f.fit.r2 << "\n";
  for (const auto& c : r.checks)
    std::cout << "  " << (c.passed ? "ok   " : "FAIL ") << c.name << (c.detail.empty() ? "" : "  (" + c.detail + ")")
              << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Directed polymer simulation laboratory"};
  app.require_subcommand(1);
  Overrides o;
  const std::vector<std::pair<ExperimentKind, const char*>> commands{
      {ExperimentKind::Simulate, "ensemble of Z_n, S_n, K_n and related fields"},
      {ExperimentKind::Exponent, "log-log slope of sd(S_n(f)) and sd(K_n(f))"},
      {ExperimentKind::Tail, "lower tail P(Z_n <= 1/u)"},
      {ExperimentKind::Overlap, "replica overlap sum_y alpha_n(y)^2"},
      {ExperimentKind::Moments, "E[Z_n^p] growth and a p* proxy"},
      {ExperimentKind::Compare, "|S_n(f) - K_n(f)| against |S_n(f)| and |K_n(f)|"},
      {ExperimentKind::Covariance, "covariance of Z_n^x - 1 across separations"},
      {ExperimentKind::Doob, "martingale and previsible parts of log Z_n increments"},
      {ExperimentKind::AppendixPhi, "E|phi(U)| and E[log(1+U)^2] against sum a_i^2"},
  };
  for (const auto& [kind, help] : commands) {
    CLI::App* sub = app.add_subcommand(experiment_name(kind), help);
    sub->add_option("--config", o.config, "JSON config or a summary.json to rerun")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--replicas", o.replicas, "replicas per n");
    sub->add_option("--dims", o.dims, "lattice dimension");
    sub->add_option("--beta", o.beta, "inverse temperature");
    sub->add_option("--family", o.family, "gaussian, rademacher, bernoulli or uniform");
    sub->add_option("--n-grid", o.n_grid, "comma-separated horizons");
    sub->add_option("--delta", o.delta, "window exponent in (0, 1/6)");
    sub->add_flag("--check", o.check, "exit 4 when an acceptance check fails");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const ExperimentKind kind = parse_experiment(app.get_subcommands().front()->get_name());
  try {
    const ExperimentConfig cfg = build_config(kind, o);
    const EnsembleResult r = run_experiment(cfg);
    if (!cfg.output.empty()) r.write(cfg.output);
    print_report(r);
    if (o.check && !r.all_passed()) return kCheck;
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InsufficientData& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ResourceError& e) {
    std::cerr << "resource budget: " << e.what() << "\n";
    return kBudget;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
