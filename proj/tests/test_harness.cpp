#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "polylab/harness.hpp"
#include "polylab/parallel.hpp"

using namespace polylab;

namespace {

ExperimentConfig small(ExperimentKind kind, double beta = 0.3) {
  ExperimentConfig c;
  c.kind = kind;
  c.beta = beta;
  c.dims = 3;
  c.n_grid = {4, 8, 12};
  c.main_block = {0, 40};
  c.mean_block = {100'000, 40};
  c.bootstrap_resamples = 60;
  return c;
}

}  // namespace

TEST_CASE("scaling exponent formula") {
  CHECK(compute_xi(2.0, 3) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(std::abs(compute_xi(1.0 + 2.0 / 3.0, 3)) <= 1e-15);
  CHECK(compute_xi(5.0, 3) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(compute_xi(2.0, 4) == doctest::Approx(0.5));
  CHECK_THROWS(compute_xi(1.0, 3));
  CHECK_THROWS(compute_xi(0.5, 3));
  // xi >= 0 exactly when p* >= 1 + 2/d, which needs d >= 2
  for (int d = 1; d <= 4; ++d)
    for (int i = 1; i < 40; ++i) {
      const double p = 1.0 + 0.05 * i;
      CHECK((compute_xi(p, d) >= -1e-15) == (d >= 2 && p >= 1.0 + 2.0 / d - 1e-12));
    }
}

TEST_CASE("exponent estimation on synthetic series") {
  std::vector<std::pair<double, double>> power, flat;
  for (double n : {16.0, 32.0, 64.0, 128.0}) {
    power.emplace_back(n, std::pow(n, -0.25));
    flat.emplace_back(n, 3.5);
  }
  const auto p = estimate_exponent(power);
  CHECK(std::abs(p.fit.slope + 0.25) <= 1e-12);
  CHECK(p.fit.r2 == doctest::Approx(1.0));
  CHECK(std::abs(estimate_exponent(flat).fit.slope) <= 1e-12);
  CHECK_THROWS_AS(estimate_exponent({{16, 1.0}, {32, 0.0}, {64, 1.0}}), std::domain_error);
  CHECK_THROWS_AS(estimate_exponent({{16, 1.0}, {32, 0.5}}), InsufficientData);

  // replicas scaled by an exact power keep every bootstrap slope at the true value
  const std::vector<double> ns{16, 32, 64, 128};
  std::vector<double> base;
  for (int r = 0; r < 50; ++r) base.push_back(std::sin(1.0 + r) + 0.1 * r);
  std::vector<std::vector<double>> samples;
  for (double n : ns) {
    samples.push_back(base);
    for (double& v : samples.back()) v *= std::pow(n, -0.25);
  }
  const auto b = estimate_exponent(ns, samples, [](const std::vector<double>& x) { return moments(x).sd; }, 200,
                                   0.95, 7);
  CHECK(std::abs(b.fit.slope + 0.25) <= 1e-12);
  CHECK(std::abs(b.ci.lo + 0.25) <= 1e-12);
  CHECK(std::abs(b.ci.hi + 0.25) <= 1e-12);
}

TEST_CASE("bootstrap interval") {
  std::vector<double> xs;
  for (int i = 0; i < 400; ++i) xs.push_back(std::fmod(i * 0.618033988749895, 1.0));
  auto mean = [&](const std::vector<std::size_t>& idx) {
    double s = 0;
    for (auto i : idx) s += xs[i];
    return s / idx.size();
  };
  const auto ci = bootstrap_ci(xs.size(), 500, 0.95, 3, mean);
  CHECK(ci.lo < 0.5);
  CHECK(ci.hi > 0.5);
  CHECK(ci.hi - ci.lo == doctest::Approx(2 * 1.96 * std::sqrt(1.0 / 12 / 400)).epsilon(0.2));
  const auto again = bootstrap_ci(xs.size(), 500, 0.95, 3, mean);
  CHECK(again.lo == ci.lo);
  CHECK(again.hi == ci.hi);
}

TEST_CASE("parallel_for visits each index once and forwards errors") {
  for (int threads : {1, 3, 8}) {
    std::vector<std::atomic<int>> seen(100);
    parallel_for(seen.size(), threads, [&](std::size_t i) { seen[i]++; });
    for (const auto& s : seen) CHECK(s.load() == 1);
    CHECK_THROWS_AS(parallel_for(50, threads, [](std::size_t i) {
                      if (i == 17) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
  }
}

TEST_CASE("config round trip, hash and validation") {
  ExperimentConfig c = small(ExperimentKind::Compare);
  c.u_grid = {2, 4};
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  ExperimentConfig t = c;
  t.threads = 7;
  t.output = "/tmp/x";
  CHECK(t.hash() == c.hash());
  t.seed = 2;
  CHECK(t.hash() != c.hash());
  CHECK(ExperimentConfig::from_json(json{{"config", c.to_json()}, {"metadata", {}}}).hash() == c.hash());

  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"replicaz", 3}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"n_grid", "16"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"env", {{"family", "poisson"}}}}).validate(), ConfigError);

  auto bad = [&](auto mutate) {
    ExperimentConfig x = small(ExperimentKind::Compare);
    mutate(x);
    CHECK_THROWS_AS(x.validate(), ConfigError);
  };
  CHECK_NOTHROW(c.validate());
  bad([](auto& x) { x.n_grid = {8, 8, 16}; });
  bad([](auto& x) { x.n_grid = {}; });
  bad([](auto& x) { x.main_block.count = 29; });
  bad([](auto& x) { x.n_grid = {8, 16}; });
  bad([](auto& x) { x.mean_block = {20, 40}; });
  bad([](auto& x) { x.mean_block.count = 0; });
  bad([](auto& x) { x.delta = 1.0 / 6.0; });
  bad([](auto& x) { x.beta = -0.1; });
  bad([](auto& x) { x.dims = 5; });
  bad([](auto& x) { x.kind = ExperimentKind::Tail; });
  bad([](auto& x) { x.kind = ExperimentKind::Overlap; });
  bad([](auto& x) { x.kind = ExperimentKind::Covariance; });
  bad([](auto& x) {
    x.kind = ExperimentKind::Moments;
    x.p_grid = {0.5, 2.0};
  });
  bad([](auto& x) {
    x.kind = ExperimentKind::Simulate;
    x.fields = {"Q"};
  });
  bad([](auto& x) {
    x.kind = ExperimentKind::Doob;
    x.inner_samples = 500;
  });
  // beta = 0 needs no injected means
  ExperimentConfig z = small(ExperimentKind::Compare, 0.0);
  z.mean_block.count = 0;
  CHECK_NOTHROW(z.validate());
}

TEST_CASE("beta zero ensembles are exactly trivial") {
  ExperimentConfig c = small(ExperimentKind::Simulate, 0.0);
  c.fields = {"Z", "logZ", "overlap", "S", "K", "M", "s_delta", "S_delta", "k_delta", "K_delta_f"};
  c.mean_block.count = 0;
  const auto r = run_experiment(c);
  for (const auto& s : r.aggregate) {
    CHECK(s.sd == 0.0);
    if (s.field == "Z") CHECK(s.mean == 1.0);
    else if (s.field == "overlap") CHECK(s.mean == doctest::Approx(return_probability(3, 2 * s.n)).epsilon(1e-15));
    else CHECK(s.mean == 0.0);
  }
  CHECK(r.all_passed());

  ExperimentConfig o = small(ExperimentKind::Overlap, 0.0);
  o.n_grid = {1, 2, 4};
  o.main_block.count = 500;
  const auto ov = run_experiment(o);
  CHECK(ov.stats("overlap", 1).mean == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

  ExperimentConfig t = small(ExperimentKind::Tail, 0.0);
  t.main_block.count = 10'000;
  t.n_grid = {8};
  const auto tr = run_experiment(t);
  for (const auto& p : tr.details["tail"][0]["curve"]) CHECK(p["p"].get<double>() == 0.0);

  ExperimentConfig m = small(ExperimentKind::Moments, 0.0);
  const auto mr = run_experiment(m);
  for (const auto& s : mr.aggregate) CHECK(s.mean == 1.0);

  ExperimentConfig d = small(ExperimentKind::Doob, 0.0);
  d.main_block.count = 3;
  d.mean_block.count = 0;
  const auto dr = run_experiment(d);
  for (const auto& row : dr.samples.rows)
    for (double v : row.values) CHECK(v == 0.0);
}

TEST_CASE("ensemble fields agree with direct computation") {
  ExperimentConfig c = small(ExperimentKind::Simulate);
  c.fields = {"Z", "logZ", "overlap", "S", "K", "s_delta", "S_delta"};
  c.main_block.count = 3;
  const auto r = run_experiment(c);
  REQUIRE(r.injected);
  for (const auto& row : r.samples.rows) {
    const PolymerSystem sys = c.system(row.seed);
    const double z = forward_partition(sys, {0, Point::zero(3)}, row.n);
    CHECK(row.values[0] == doctest::Approx(z).epsilon(1e-13));
    CHECK(row.values[1] == doctest::Approx(std::log(z)).epsilon(1e-12));
    CHECK(row.values[2] == doctest::Approx(polymer_measure_alpha(sys, Point::zero(3), row.n).sum_squares()).epsilon(1e-12));
    const auto p = fluct_fields(sys, row.n, c.f, r.injected->log_mean(row.n));
    CHECK(row.values[3] == doctest::Approx(p.S).epsilon(1e-12));
    CHECK(row.values[4] == doctest::Approx(p.K).epsilon(1e-12));
    CHECK(std::abs(row.values[5] + row.values[6] - p.S) <= 1e-12);
  }
}

TEST_CASE("injected log means agree with a plain estimate") {
  ExperimentConfig c = small(ExperimentKind::Simulate, 0.5);
  c.n_grid = {10};
  c.mean_block = {500, 400};
  c.truncation_sigmas = 2.5;  // coarse truncation exercises the survival correction
  const auto m = estimate_log_means(c);
  double s = 0, ss = 0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    const double l = std::log(forward_partition(c.system(c.replica_seed(10'000 + r)), {0, Point::zero(3)}, 10));
    s += l;
    ss += l * l;
  }
  const double mean = s / reps, se = std::sqrt((ss / reps - mean * mean) / reps);
  CHECK(std::abs(m.log_mean(10) - mean) <= 4.0 * std::hypot(se, m.log_z_stderr[10]));
  CHECK(m.log_z_stderr[10] < se);
  double tele = 0.0;
  for (int k = 1; k <= 10; ++k) tele += m.increment[k];
  CHECK(tele == doctest::Approx(m.log_mean(10)).epsilon(1e-10));
}

TEST_CASE("results are identical across thread counts and reruns") {
  ExperimentConfig c = small(ExperimentKind::Compare);
  c.main_block.count = 30;
  c.mean_block.count = 30;
  c.threads = 1;
  const json ref = run_experiment(c).payload();
  for (int threads : {1, 4, 16}) {
    c.threads = threads;
    CHECK(run_experiment(c).payload() == ref);
  }
}

TEST_CASE("outputs are written and the summary reruns") {
  const auto dir = std::filesystem::temp_directory_path() / "polylab_test_out";
  std::filesystem::remove_all(dir);
  ExperimentConfig c = small(ExperimentKind::Simulate);
  c.fields = {"Z", "S", "K"};
  c.main_block.count = 5;
  c.output = dir.string();
  const auto r = run_experiment(c);
  r.write(c.output);
  for (const char* f : {"samples.csv", "aggregate.csv", "summary.json"}) CHECK(std::filesystem::exists(dir / f));
  std::ifstream in(dir / "summary.json");
  const json s = json::parse(in);
  CHECK(s["config_hash"] == c.hash());
  CHECK(s.contains("metadata"));
  const auto again = run_experiment(ExperimentConfig::load((dir / "summary.json").string()));
  CHECK(again.payload() == r.payload());
  std::ifstream csv(dir / "samples.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "n,replica,seed,Z,S,K");
  std::filesystem::remove_all(dir);
}

TEST_CASE("covariance vanishes for disjoint cones") {
  ExperimentConfig c = small(ExperimentKind::Covariance);
  c.n_grid = {4};
  c.main_block.count = 2000;
  c.separations = {0, 2, 9, 12};
  const auto r = run_experiment(c);
  CHECK(r.all_passed());
  const auto& row = r.details["covariance"][0]["separations"];
  CHECK(row[0]["cov"].get<double>() > 0.0);
  CHECK(row[1]["cov"].get<double>() > 0.0);
}

TEST_CASE("tail, overlap and appendix outputs are well formed") {
  ExperimentConfig t = small(ExperimentKind::Tail, 0.9);
  t.n_grid = {6};
  t.main_block.count = 10'000;
  const auto tr = run_experiment(t);
  double last = 1.0;
  for (const auto& p : tr.details["tail"][0]["curve"]) {
    const double v = p["p"];
    CHECK(v >= 0.0);
    CHECK(v <= last);
    last = v;
  }

  ExperimentConfig o = small(ExperimentKind::Overlap, 0.4);
  o.main_block.count = 500;
  const auto orr = run_experiment(o);
  for (const auto& row : orr.samples.rows) {
    CHECK(row.values[0] > 0.0);
    CHECK(row.values[0] <= 1.0);
  }

  ExperimentConfig a = small(ExperimentKind::AppendixPhi, 0.5);
  a.samples = 5000;
  const auto ar = run_experiment(a);
  for (const auto& row : ar.samples.rows) CHECK(row.values[4] == doctest::Approx(1.0 / row.n).epsilon(1e-12));
}
