#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "polylab/fields.hpp"
#include "polylab/polymer.hpp"
#include "polylab/stats.hpp"

namespace polylab {

using json = nlohmann::json;

/// Invalid or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Requested estimator needs more data than the configuration provides.
class InsufficientData : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { Simulate, Exponent, Tail, Overlap, Moments, Compare, Covariance, Doob, AppendixPhi };
std::string experiment_name(ExperimentKind k);
ExperimentKind parse_experiment(const std::string& s);

/// Replica indices [first, first + count); the seed of index i is mix64(master ^ mix64(i)).
struct SeedBlock {
  std::uint64_t first = 0;
  std::uint64_t count = 0;
  bool intersects(const SeedBlock& o) const;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Simulate;
  std::string family = "gaussian";
  double beta = 0.2;
  double bernoulli_p = 0.5;
  double uniform_a = -1.0;
  double uniform_b = 1.0;
  std::uint64_t seed = 1;
  int dims = 3;
  std::vector<std::int64_t> n_grid{16, 32, 64, 128};
  SeedBlock main_block{0, 200};
  SeedBlock mean_block{1'000'000'000, 0};  // mean-injection replicas
  TestFunction f{TestFunction::Kind::SmoothBump, 1.0};
  double delta = 0.1;
  std::vector<std::string> fields{"Z", "logZ"};  // simulate only
  double truncation_sigmas = 4.0;                 // 0 = exact sweeps
  std::int64_t cell_budget = 200'000'000;
  int threads = 1;
  std::string output;
  std::vector<double> u_grid{2, 3, 5, 7, 10, 15, 20, 30, 50};
  std::vector<double> p_grid{1.0, 1.5, 2.0, 3.0};
  std::vector<double> separations;  // empty = {0, sqrt n, sqrt n log n, 2 sqrt n log n}
  int inner_samples = 1000;
  std::vector<std::int64_t> m_grid{4, 16, 64, 256};
  std::int64_t samples = 100'000;  // appendix-phi draws per m
  int bootstrap_resamples = 400;
  double confidence = 0.95;
  double flat_slope = 0.05;  // moments: growth slope below this counts as bounded

  std::int64_t replicas() const { return static_cast<std::int64_t>(main_block.count); }
  EnvSpec env() const;
  PolymerSystem system(std::uint64_t replica_seed) const;
  std::uint64_t replica_seed(std::uint64_t index) const;
  std::int64_t n_max() const { return n_grid.empty() ? 0 : n_grid.back(); }

  /// Throws ConfigError.
  void validate() const;
  json to_json() const;
  /// Accepts a bare config object or a summary.json carrying one under "config".
  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig load(const std::string& path);
  /// FNV-1a of the canonical JSON of every numeric input; threads and output excluded.
  std::string hash() const;
};

/// xi = d/2 - (1 + d/2) / min(p*, 2).
double compute_xi(double pstar, int d);

struct ModelParams {
  double pstar_proxy = 0.0;
  double xi = 0.0;
};

struct FieldStats {
  std::string field;
  std::int64_t n = 0;
  std::int64_t count = 0;
  double mean = 0.0, sd = 0.0, stderr_ = 0.0;
  double q05 = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, q95 = 0.0;
};
FieldStats field_stats(const std::string& field, std::int64_t n, const std::vector<double>& xs);

struct ExponentFit {
  std::string name;
  LinearFit fit;
  ConfidenceInterval ci;
};
/// OLS of log value on log n. The interval is slope +- z * slope_se.
ExponentFit estimate_exponent(const std::vector<std::pair<double, double>>& series, double level = 0.95);
/// Same fit of log stat(samples at n), with a percentile bootstrap over replica indices;
/// samples[i][r] is replica r at ns[i], and a replica index is resampled jointly across n.
ExponentFit estimate_exponent(const std::vector<double>& ns, const std::vector<std::vector<double>>& samples,
                              const std::function<double(const std::vector<double>&)>& stat, int resamples,
                              double level, std::uint64_t seed);

/// Control-variate estimates of E[log Z_k], k = 0..n_max, from the mean-injection block:
/// log z = (z - 1) - phi(z - 1), so E[log Z] = (E[Z] - 1) - E[phi(Z - 1)]. E[Z] is 1, or the
/// walk's survival probability under truncation, which a beta = 0 sweep gives exactly.
struct InjectedMeans {
  std::vector<double> log_z;          // index k
  std::vector<double> log_z_stderr;
  std::vector<double> increment;      // E[log Z_k / Z_{k-1}], index k (0 unused)
  std::vector<double> increment_stderr;
  std::int64_t replicas = 0;
  double log_mean(std::int64_t k) const { return log_z.at(static_cast<std::size_t>(k)); }
};
InjectedMeans estimate_log_means(const ExperimentConfig& cfg);

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SampleTable {
  std::vector<std::string> columns;  // value columns after n, replica, seed
  struct Row {
    std::int64_t n = 0;
    std::int64_t replica = 0;
    std::uint64_t seed = 0;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  /// Values of one column at one n, in replica order.
  std::vector<double> column(const std::string& name, std::int64_t n) const;
};

struct EnsembleResult {
  ExperimentConfig config;
  SampleTable samples;
  std::vector<FieldStats> aggregate;
  std::vector<ExponentFit> fits;
  json details = json::object();
  std::vector<Check> checks;
  std::optional<InjectedMeans> injected;
  double wall_seconds = 0.0;

  bool all_passed() const;
  const FieldStats& stats(const std::string& field, std::int64_t n) const;
  const ExponentFit& fit(const std::string& name) const;
  /// Everything except timing and thread count: equal across reruns of one config.
  json payload() const;
  json summary() const;
  std::string samples_csv() const;
  std::string aggregate_csv() const;
  /// Writes samples.csv, aggregate.csv and summary.json into dir.
  void write(const std::string& dir) const;
};

/// Per-replica fields at every n of the grid, aggregated.
/// Fields: Z, logZ, overlap, S, K, M, s_delta, S_delta, k_delta, K_delta_f.
EnsembleResult run_ensemble(const ExperimentConfig& cfg, const std::vector<std::string>& fields);

EnsembleResult estimate_exponent_experiment(const ExperimentConfig& cfg);
EnsembleResult tail_curve(const ExperimentConfig& cfg);
EnsembleResult overlap_curve(const ExperimentConfig& cfg);
EnsembleResult moment_curve(const ExperimentConfig& cfg);
EnsembleResult compare_she_kpz(const ExperimentConfig& cfg);
EnsembleResult covariance_decay(const ExperimentConfig& cfg);
EnsembleResult doob_experiment(const ExperimentConfig& cfg);
EnsembleResult appendix_phi_experiment(const ExperimentConfig& cfg);

/// Dispatches on cfg.kind.
EnsembleResult run_experiment(const ExperimentConfig& cfg);

/// Analyses over an ensemble holding S and K; used by run_experiment and the acceptance suite.
void analyze_exponent(EnsembleResult& r);
void analyze_compare(EnsembleResult& r);

}  // namespace polylab
