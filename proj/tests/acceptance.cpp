// Acceptance suite: one PASS/FAIL line per criterion. Criteria are selected by
// number on the command line; with none given every criterion runs.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "polylab/harness.hpp"

using namespace polylab;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Running maximum of an error measure, tracked against a tolerance.
struct Worst {
  std::string name;
  double tol;
  double value = 0.0;
  std::int64_t checked = 0;
  void add(double err) {
    ++checked;
    if (!(err <= value)) value = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
  }
  bool ok() const { return value <= tol && checked > 0; }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

Outcome summarize(const std::vector<Worst>& ws, std::string extra = {}) {
  Outcome o;
  for (const auto& w : ws) {
    o.pass &= w.ok();
    o.detail += (o.detail.empty() ? "" : "; ") + w.name + " " + fmt(w.value) + " (tol " + fmt(w.tol) + ", " +
                std::to_string(w.checked) + " checks)";
  }
  if (!extra.empty()) o.detail += "; " + extra;
  return o;
}

Outcome from_result(const EnsembleResult& r, const std::function<bool(const Check&)>& keep = {}) {
  Outcome o;
  for (const auto& c : r.checks) {
    if (keep && !keep(c)) continue;
    o.pass &= c.passed;
    o.detail += (o.detail.empty() ? "" : "; ") + std::string(c.passed ? "" : "FAILED ") + c.name +
                (c.detail.empty() ? "" : " [" + c.detail + "]");
  }
  return o;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Point random_point(std::mt19937_64& rng, int d, int r) {
  std::uniform_int_distribution<int> u(-r, r);
  Point p(d);
  for (int i = 0; i < d; ++i) p[i] = u(rng);
  return p;
}

Point random_walk(std::mt19937_64& rng, int d, std::int64_t steps) {
  Point x = Point::zero(d);
  for (std::int64_t s = 0; s < steps; ++s) x = x + Point::unit(d, static_cast<int>(rng() % d), rng() % 2 ? 1 : -1);
  return x;
}

struct Settings {
  int threads = 1;
  std::string out = "acceptance_out";
};

/// Every 6-step path from the origin, enumerated once. Prefix products of the
/// weights give Z_k, alpha_k, bridge averages and marginals for all k <= n.
struct PathSums {
  int n = 0;
  std::vector<double> z;                                  // sum of prefix_k
  std::vector<std::map<Point, double>> endpoint;          // k -> y -> sum of prefix_{k-1} 1{X_k = y}
  std::vector<std::map<Point, double>> count;             // k -> y -> number of paths with X_k = y
  std::vector<std::map<Point, double>> marginal;          // t -> z -> sum of prefix_n 1{X_t = z}
};

PathSums enumerate(const PolymerSystem& sys, int n) {
  const int d = sys.dim();
  PathSums s;
  s.n = n;
  s.z.assign(n + 1, 0.0);
  s.endpoint.resize(n + 1);
  s.count.resize(n + 1);
  s.marginal.resize(n + 1);
  oracle::enumerate_paths(Point::zero(d), n, [&](const std::vector<Point>& p) {
    std::vector<double> prefix(n + 1, 1.0);
    for (int k = 1; k <= n; ++k) prefix[k] = prefix[k - 1] * sys.weight(k, p[k]);
    for (int k = 0; k <= n; ++k) s.z[k] += prefix[k];
    for (int k = 1; k <= n; ++k) {
      s.endpoint[k][p[k]] += prefix[k - 1];
      s.count[k][p[k]] += 1.0;
      s.marginal[k][p[k]] += prefix[n];
    }
  });
  return s;
}

Outcome criterion1(const Settings&) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  Worst fwd{"forward", 1e-12}, alpha{"alpha", 1e-12}, pinned{"pinned", 1e-12}, marg{"marginal", 1e-12};
  int envs = 0;
  const int n = 6;
  for (int d = 1; d <= 3; ++d) {
    for (Family fam : {Family::Rademacher, Family::Gaussian}) {
      for (int rep = 0; rep < 9; ++rep, ++envs) {
        const SpaceTimePoint shift{static_cast<std::int64_t>(rng() % 5), random_point(rng, d, 4)};
        const PolymerSystem sys = PolymerSystem(EnvSpec::make(fam, 0.7), rng(), d).shifted(shift);
        const PathSums s = enumerate(sys, n);
        const double norm = std::pow(2.0 * d, -n);
        const Point o = Point::zero(d);
        for (int k = 0; k <= n; ++k) fwd.add(rel(forward_partition(sys, {0, o}, k), s.z[k] * norm));
        for (int k = 1; k <= n; ++k) {
          const BoxField a = polymer_measure_alpha(sys, o, k);
          double total = 0.0;
          for (const auto& [y, v] : s.endpoint[k]) total += v;
          double lib_total = 0.0;
          for (const auto& [y, v] : s.endpoint[k]) {
            alpha.add(rel(a.at(y), v / total));
            lib_total += a.at(y);
          }
          alpha.add(std::abs(lib_total - a.sum()));  // no mass off the reachable set
          if (k >= 2)
            for (const auto& [y, v] : s.endpoint[k])
              pinned.add(rel(pinned_partition(sys, {0, o}, {k, y}), v / s.count[k].at(y)));
          for (const auto& [y, v] : s.marginal[k]) marg.add(rel(path_marginal(sys, n, k, y), v / s.z[n]));
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o = summarize({fwd, alpha, pinned, marg},
                        std::to_string(envs) + " environments, d=1..3, n<=6, " + fmt(secs) + " s (limit 10 s)");
  o.pass &= envs >= 50 && secs < 10.0;
  return o;
}

Outcome criterion2(const Settings&) {
  Worst norm{"alpha normalization", 1e-12}, tele{"log Z telescoping", 1e-12}, window{"S = s + S^delta", 1e-12},
      onestep{"one-step martingale (relative)", 1e-14}, shift{"shift equivariance", 0.0},
      starts{"all-starts vs per-start", 1e-12};
  const TestFunction f{TestFunction::Kind::SmoothBump, 1.0};
  std::mt19937_64 rng(202);
  int envs = 0;
  for (Family fam : {Family::Gaussian, Family::Rademacher}) {
    for (int rep = 0; rep < 10; ++rep, ++envs) {
      const PolymerSystem sys(EnvSpec::make(fam, 0.5), rng(), 3);
      const Point o = Point::zero(3);
      const std::int64_t n = 24;
      norm.add(std::abs(polymer_measure_alpha(sys, o, n).sum() - 1.0));
      double prev = 1.0;
      CompensatedSum acc;
      const BoxField rho =
          forward_sweep(sys, {0, o}, n, nullptr, [&](std::int64_t, const BoxField&, const BoxField& r) {
            const double z = r.sum();
            acc.add(std::log(z / prev));
            prev = z;
          });
      tele.add(std::abs(acc.value() - std::log(rho.sum())));
      onestep.add(std::abs(neighbor_average(rho).sum() - rho.sum()) / rho.sum());

      const auto w = window_decomposition(sys, n, f, 0.12, -0.04, -0.02);
      const auto full = fluct_fields(sys, n, f, -0.06);
      window.add(std::abs(full.S - (w.s_delta + w.S_delta)));

      const SpaceTimePoint by{static_cast<std::int64_t>(rng() % 7), random_point(rng, 3, 9)};
      const double a = forward_partition(sys.shifted(by), {0, o}, 12);
      const double b = forward_partition(sys, by, 12);
      shift.add(a == b ? 0.0 : std::abs(a - b) + 1e-300);

      const Box box = Box::centered(random_point(rng, 3, 2), 2);
      const BoxField zs = all_starts_partition(sys, 10, box);
      zs.for_each([&](const Point& x, double v) { starts.add(rel(v, forward_partition(sys, {0, x}, 10))); });
    }
  }
  return summarize({norm, tele, window, onestep, shift, starts}, std::to_string(envs) + " environments, d=3");
}

Outcome criterion3(const Settings&) {
  const auto t0 = std::chrono::steady_clock::now();
  Worst res{"SHE residual", 1e-12}, match{"u_0 vs all-starts Z_16", 1e-12};
  std::int64_t sites = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const Family fam = rep % 2 ? Family::Rademacher : Family::Gaussian;
    const PolymerSystem sys(EnvSpec::make(fam, 0.6), 3000 + static_cast<std::uint64_t>(rep), 3);
    const Box box = Box::centered(Point::zero(3), 3);
    const auto fields = she_kpz_fields(sys, 16, box);
    res.add(fields.residual);
    sites += fields.residual_sites;
    const BoxField z = all_starts_partition(sys, 16, box);
    z.for_each([&](const Point& x, double v) { match.add(rel(fields.u.front().at(x), v)); });
  }
  const double secs = seconds_since(t0);
  Outcome o = summarize({res, match}, "20 environments, d=3, n=16, " + std::to_string(sites) + " residual sites, " +
                                          fmt(secs) + " s (limit 30 s)");
  o.pass &= secs < 30.0 && sites > 0;
  return o;
}

Outcome criterion4(const Settings&) {
  std::mt19937_64 rng(404);
  Worst grad{"finite difference vs beta * marginal", 1e-6};
  const double h = 1e-5;
  for (int env = 0; env < 10; ++env) {
    const double beta = 0.3 + 0.1 * env;
    const PolymerSystem sys(EnvSpec::make(Family::Gaussian, beta), 4000 + static_cast<std::uint64_t>(env), 3);
    const Point o = Point::zero(3);
    for (int rep = 0; rep < 10; ++rep) {
      const std::int64_t n = 4 + static_cast<std::int64_t>(rng() % 7);
      const std::int64_t t = 1 + static_cast<std::int64_t>(rng() % n);
      const Point x = random_walk(rng, 3, t);
      const double w0 = sys.omega(t, x);
      const double up = std::log(forward_partition(sys.with_override(t, x, w0 + h), {0, o}, n));
      const double dn = std::log(forward_partition(sys.with_override(t, x, w0 - h), {0, o}, n));
      grad.add(rel((up - dn) / (2 * h), beta * path_marginal(sys, n, t, x)));
    }
  }
  return summarize({grad}, "100 points, Gaussian, n in 4..10, step 1e-5");
}

Outcome criterion5(const Settings&) {
  Worst norm{"normalization", 1e-12}, sym{"symmetry", 1e-15}, parity{"off-parity mass", 0.0}, ck{"Chapman-Kolmogorov", 1e-12},
      binom{"d=1 binomial", 0.0}, lclt{"LCLT relative error (d=3, n=100, |x|<=2 sqrt n)", 0.05};
  for (int d = 1; d <= 3; ++d) {
    for (int n : {0, 1, 7, 16, 40}) {
      const BoxField p = heat_kernel(d, n);
      norm.add(std::abs(p.sum() - 1.0));
      p.for_each([&](const Point& x, double v) {
        if (!parity_connected({0, Point::zero(d)}, {n, x})) parity.add(std::abs(v));
        sym.add(std::abs(v - p.at(-x)));
        for (int i = 1; i < d; ++i) {
          Point swapped = x;
          std::swap(swapped[0], swapped[i]);
          sym.add(std::abs(v - p.at(swapped)));
        }
      });
    }
    for (auto [m, k] : {std::pair{4, 5}, std::pair{9, 6}}) {
      const BoxField pm = heat_kernel(d, m), pk = heat_kernel(d, k), pmk = heat_kernel(d, m + k);
      pmk.for_each([&](const Point& x, double v) {
        double s = 0.0;
        pm.for_each([&](const Point& y, double a) { s += a * pk.at(x - y); });
        ck.add(std::abs(s - v));
      });
    }
  }
  for (int n : {1, 10, 20}) {
    const BoxField p = heat_kernel(1, n);
    for (int x = -n; x <= n; ++x) {
      const double expected = ((x + n) % 2) ? 0.0 : oracle::binomial(n, (n + x) / 2) / std::pow(2.0, n);
      binom.add(p.at(Point(1, {x})) == expected ? 0.0 : std::abs(p.at(Point(1, {x})) - expected) + 1e-300);
    }
  }
  const int n = 100;
  const BoxField p = heat_kernel(3, n);
  const double r2 = 4.0 * n;
  Point arg_worst(3);
  p.for_each([&](const Point& x, double v) {
    if (static_cast<double>(x.norm2_sq()) > r2 || v == 0.0) return;
    const double e = std::abs(lclt_approx(3, n, x) / v - 1.0);
    if (e > lclt.value) arg_worst = x;
    lclt.add(e);
  });
  std::ostringstream where;
  where << "LCLT worst at x = (" << arg_worst[0] << "," << arg_worst[1] << "," << arg_worst[2] << ")";
  return summarize({norm, sym, parity, ck, binom, lclt}, where.str());
}

Outcome criterion6(const Settings& st) {
  Outcome o;
  int combos = 0;
  for (const char* fam : {"gaussian", "rademacher"}) {
    for (double beta : {0.1, 0.2, 0.5}) {
      ExperimentConfig c;
      c.kind = ExperimentKind::Simulate;
      c.family = fam;
      c.beta = beta;
      c.dims = 3;
      c.seed = 6000 + static_cast<std::uint64_t>(++combos);
      c.n_grid = {16, 64};
      c.main_block = {0, 10'000};
      c.fields = {"Z"};
      c.threads = st.threads;
      const EnsembleResult r = run_experiment(c);
      r.write(st.out + "/c6_" + std::string(fam) + "_beta" + fmt(beta));
      for (std::int64_t n : c.n_grid) {
        const FieldStats& s = r.stats("Z", n);
        const bool ok = std::abs(s.mean - 1.0) <= 4.0 * s.stderr_;
        o.pass &= ok;
        o.detail += (o.detail.empty() ? "" : "; ") + std::string(ok ? "" : "FAILED ") + fam + " b=" + fmt(beta) +
                    " n=" + std::to_string(n) + ": " + fmt(s.mean) + " +- " + fmt(s.stderr_);
      }
    }
  }
  o.detail += "; 10000 replicas each";
  return o;
}

ExperimentConfig l2_config(const Settings& st) {
  ExperimentConfig c;
  c.kind = ExperimentKind::Compare;
  c.family = "gaussian";
  c.beta = 0.2;
  c.dims = 3;
  c.seed = 7;
  c.n_grid = {16, 32, 64, 128};
  c.main_block = {0, 2000};
  c.mean_block = {1'000'000'000, 4000};
  c.threads = st.threads;
  return c;
}

/// The exponent and comparison criteria share one ensemble.
struct L2Ensemble {
  std::optional<EnsembleResult> exponent, compare;
  std::vector<double> second_moment;
};

L2Ensemble& l2_ensemble(const Settings& st) {
  static L2Ensemble cache;
  if (cache.exponent) return cache;
  const ExperimentConfig c = l2_config(st);
  c.validate();
  set_cell_budget(c.cell_budget);
  const auto t0 = std::chrono::steady_clock::now();
  EnsembleResult base = run_ensemble(c, {"S", "K"});
  base.wall_seconds = seconds_since(t0);
  cache.exponent = base;
  cache.exponent->config.kind = ExperimentKind::Exponent;
  analyze_exponent(*cache.exponent);
  cache.compare = std::move(base);
  analyze_compare(*cache.compare);
  cache.exponent->write(st.out + "/c7_exponent");
  cache.compare->write(st.out + "/c8_compare");
  cache.second_moment = second_moment_curve(c.env(), c.dims, 256);
  return cache;
}

Outcome criterion7(const Settings& st) {
  L2Ensemble& e = l2_ensemble(st);
  Outcome o = from_result(*e.exponent);
  std::vector<std::pair<double, double>> series;
  std::string trail;
  for (std::int64_t n : {16, 32, 64, 128, 256}) {
    series.emplace_back(static_cast<double>(n), e.second_moment[static_cast<std::size_t>(n)]);
    trail += (trail.empty() ? "" : ", ") + fmt(e.second_moment[static_cast<std::size_t>(n)]);
  }
  const double slope = estimate_exponent(series).fit.slope;
  const bool flat = slope < 0.05;
  o.pass &= flat;
  o.detail += "; exact E[Z_n^2] at n=16..256: " + trail + " (log-log slope " + fmt(slope) +
              (flat ? ", flat)" : ", NOT flat)") + "; 2000 replicas, " + fmt(e.exponent->wall_seconds) + " s";
  return o;
}

Outcome criterion8(const Settings& st) {
  L2Ensemble& e = l2_ensemble(st);
  Outcome o = from_result(*e.compare);
  o.detail += "; 2000 replicas";
  return o;
}

Outcome criterion9(const Settings& st) {
  ExperimentConfig c;
  c.kind = ExperimentKind::Overlap;
  c.beta = 0.2;
  c.seed = 9;
  c.n_grid = {16, 32, 64, 128};
  c.main_block = {0, 500};
  c.threads = st.threads;
  const EnsembleResult r = run_experiment(c);
  r.write(st.out + "/c9_overlap");
  Outcome o = from_result(r);
  o.detail += "; 500 replicas";
  return o;
}

Outcome criterion10(const Settings& st) {
  ExperimentConfig c;
  c.kind = ExperimentKind::Tail;
  c.beta = 0.3;
  c.seed = 10;
  c.n_grid = {64};
  c.main_block = {0, 10'000};
  c.threads = st.threads;
  const EnsembleResult r = run_experiment(c);
  r.write(st.out + "/c10_tail");
  Outcome o = from_result(r);
  std::string counts;
  for (const auto& p : r.details["tail"][0]["curve"])
    counts += (counts.empty() ? "" : " ") + fmt(p["u"].get<double>()) + ":" + std::to_string(p["count"].get<std::int64_t>());
  const auto& z = r.stats("Z", 64);
  o.detail += "; events per u " + counts + "; Z_64 q05 " + fmt(z.q05) + ", sd " + fmt(z.sd) + "; 10000 replicas";
  return o;
}

Outcome criterion11(const Settings& st) {
  ExperimentConfig c;
  c.kind = ExperimentKind::AppendixPhi;
  c.family = "gaussian";
  c.beta = 0.5;
  c.seed = 11;
  c.m_grid = {4, 16, 64, 256};
  c.samples = 100'000;
  c.threads = st.threads;
  const EnsembleResult r = run_experiment(c);
  r.write(st.out + "/c11_appendix");
  return from_result(r);
}

Outcome criterion12(const Settings& st) {
  std::vector<ExperimentConfig> configs;
  {
    ExperimentConfig c;
    c.kind = ExperimentKind::Compare;
    c.beta = 0.3;
    c.n_grid = {8, 16, 32};
    c.main_block = {0, 60};
    c.mean_block = {5000, 60};
    configs.push_back(c);
  }
  {
    ExperimentConfig c;
    c.kind = ExperimentKind::Tail;
    c.beta = 0.9;
    c.family = "rademacher";
    c.n_grid = {6};
    c.main_block = {0, 10'000};
    configs.push_back(c);
  }
  {
    ExperimentConfig c;
    c.kind = ExperimentKind::Moments;
    c.beta = 0.4;
    c.n_grid = {4, 8, 16};
    c.main_block = {0, 200};
    configs.push_back(c);
  }
  {
    ExperimentConfig c;
    c.kind = ExperimentKind::Doob;
    c.beta = 0.5;
    c.n_grid = {6};
    c.main_block = {0, 8};
    c.mean_block = {100, 40};
    configs.push_back(c);
  }
  {
    ExperimentConfig c;
    c.kind = ExperimentKind::Simulate;
    c.beta = 0.5;
    c.n_grid = {4, 8, 12};
    c.fields = {"Z", "logZ", "overlap", "S", "K", "M", "s_delta", "S_delta", "k_delta", "K_delta_f"};
    c.main_block = {0, 12};
    c.mean_block = {100, 40};
    configs.push_back(c);
  }
  {
    ExperimentConfig c;
    c.kind = ExperimentKind::Covariance;
    c.beta = 0.4;
    c.n_grid = {4};
    c.main_block = {0, 2000};
    configs.push_back(c);
  }
  {
    ExperimentConfig c;
    c.kind = ExperimentKind::AppendixPhi;
    c.samples = 20'000;
    configs.push_back(c);
  }
  Outcome o;
  for (ExperimentConfig c : configs) {
    c.threads = 1;
    const std::string dir = st.out + "/c12_" + experiment_name(c.kind);
    const EnsembleResult first = run_experiment(c);
    first.write(dir);
    const ExperimentConfig loaded = ExperimentConfig::load(dir + "/summary.json");
    std::string line = experiment_name(c.kind) + ":";
    for (int threads : {1, 4, 16}) {
      ExperimentConfig again = loaded;
      again.threads = threads;
      const bool same = run_experiment(again).payload() == first.payload();
      o.pass &= same;
      line += " " + std::to_string(threads) + (same ? "=" : "!=");
    }
    o.detail += (o.detail.empty() ? "" : "; ") + line;
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> selected;
  Settings st;
  st.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("criteria", selected, "criterion numbers to run (default: all)")->check(CLI::Range(1, 12));
  app.add_option("--threads", st.threads, "worker threads for ensembles");
  app.add_option("--out", st.out, "directory for ensemble outputs");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome(const Settings&)>>> criteria{
      {"oracle equivalence", criterion1},      {"exact identities", criterion2},
      {"discrete SHE residual", criterion3},   {"gradient identity", criterion4},
      {"heat-kernel suite", criterion5},       {"martingale ensemble", criterion6},
      {"xi-scaling", criterion7},              {"S-K comparison", criterion8},
      {"overlap decay", criterion9},           {"lower tail", criterion10},
      {"appendix phi diagnostic", criterion11}, {"reproducibility", criterion12},
  };
  std::set<int> run(selected.begin(), selected.end());
  if (run.empty())
    for (int i = 1; i <= 12; ++i) run.insert(i);

  int failed = 0;
  for (int i : run) {
    const auto& [name, fn] = criteria[static_cast<std::size_t>(i - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn(st);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << i << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << " (" << fmt(seconds_since(t0))
              << " s): " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
