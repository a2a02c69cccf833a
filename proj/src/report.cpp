#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "polylab/harness.hpp"

#ifndef POLYLAB_GIT_REV
#define POLYLAB_GIT_REV "unknown"
#endif

namespace polylab {

namespace {

constexpr const char* kVersion = "0.1.0";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

json stats_json(const FieldStats& s) {
  return {{"field", s.field}, {"n", s.n},       {"count", s.count}, {"mean", s.mean}, {"sd", s.sd},
          {"stderr", s.stderr_}, {"q05", s.q05}, {"q25", s.q25},     {"median", s.median}, {"q75", s.q75},
          {"q95", s.q95}};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

}  // namespace

bool EnsembleResult::all_passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

const FieldStats& EnsembleResult::stats(const std::string& field, std::int64_t n) const {
  for (const auto& s : aggregate)
    if (s.field == field && s.n == n) return s;
  throw std::out_of_range("no aggregate for " + field + " at n=" + std::to_string(n));
}

const ExponentFit& EnsembleResult::fit(const std::string& name) const {
  for (const auto& f : fits)
    if (f.name == name) return f;
  throw std::out_of_range("no fit named " + name);
}

json EnsembleResult::payload() const {
  json p;
  json cfg = config.to_json();
  cfg.erase("threads");
  cfg.erase("output");
  p["config"] = cfg;
  p["config_hash"] = config.hash();
  json agg = json::array();
  for (const auto& s : aggregate) agg.push_back(stats_json(s));
  p["aggregate"] = agg;
  json fj = json::array();
  for (const auto& f : fits)
    fj.push_back({{"name", f.name},
                  {"slope", f.fit.slope},
                  {"intercept", f.fit.intercept},
                  {"r2", f.fit.r2},
                  {"slope_se", f.fit.slope_se},
                  {"points", f.fit.points},
                  {"ci", {{"lo", f.ci.lo}, {"hi", f.ci.hi}, {"level", f.ci.level}, {"resamples", f.ci.resamples}}}});
  p["fits"] = fj;
  p["details"] = details;
  json cj = json::array();
  for (const auto& c : checks) cj.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  p["checks"] = cj;
  if (injected) {
    json inj;
    inj["replicas"] = injected->replicas;
    json rows = json::array();
    for (std::int64_t n : config.n_grid) {
      if (static_cast<std::size_t>(n) >= injected->log_z.size()) continue;
      rows.push_back({{"n", n}, {"log_z", injected->log_z[n]}, {"stderr", injected->log_z_stderr[n]}});
    }
    inj["log_z"] = rows;
    p["injected_means"] = inj;
  }
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(fnv1a(samples_csv())));
  p["samples_digest"] = digest;
  p["sample_rows"] = samples.rows.size();
  return p;
}

json EnsembleResult::summary() const {
  json s = payload();
  s["config"] = config.to_json();
  s["metadata"] = {{"version", kVersion},
                   {"git", POLYLAB_GIT_REV},
                   {"wall_seconds", wall_seconds},
                   {"threads", config.threads},
                   {"all_checks_passed", all_passed()}};
  return s;
}

std::string EnsembleResult::samples_csv() const {
  std::ostringstream out;
  out << "n,replica,seed";
  for (const auto& c : samples.columns) out << ',' << c;
  out << '\n';
  for (const auto& row : samples.rows) {
    out << row.n << ',' << row.replica << ',' << row.seed;
    for (double v : row.values) out << ',' << num(v);
    out << '\n';
  }
  return out.str();
}

std::string EnsembleResult::aggregate_csv() const {
  std::ostringstream out;
  out << "n,field,count,mean,sd,stderr,q05,q25,median,q75,q95\n";
  for (const auto& s : aggregate)
    out << s.n << ',' << s.field << ',' << s.count << ',' << num(s.mean) << ',' << num(s.sd) << ','
        << num(s.stderr_) << ',' << num(s.q05) << ',' << num(s.q25) << ',' << num(s.median) << ',' << num(s.q75)
        << ',' << num(s.q95) << '\n';
  return out.str();
}

void EnsembleResult::write(const std::string& dir) const {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  write_file(root / "samples.csv", samples_csv());
  write_file(root / "aggregate.csv", aggregate_csv());
  write_file(root / "summary.json", summary().dump(2) + "\n");
}

}  // namespace polylab
