#include "polylab/stats.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace polylab {

Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.n = static_cast<std::int64_t>(xs.size());
  if (m.n == 0) return m;
  CompensatedSum s;
  for (double v : xs) s.add(v);
  m.mean = s.value() / static_cast<double>(m.n);
  if (m.n < 2) return m;
  CompensatedSum ss;
  for (double v : xs) ss.add((v - m.mean) * (v - m.mean));
  m.sd = std::sqrt(ss.value() / static_cast<double>(m.n - 1));
  m.stderr_ = m.sd / std::sqrt(static_cast<double>(m.n));
  return m;
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("quantile level must lie in [0,1]");
  std::sort(xs.begin(), xs.end());
  const double h = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

LinearFit ols(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("ols: size mismatch");
  if (x.size() < 2) throw std::invalid_argument("ols: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("ols: x values are all equal");
  LinearFit f;
  f.points = static_cast<std::int64_t>(x.size());
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    sse += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  f.slope_se = x.size() > 2 ? std::sqrt(sse / (n - 2.0) / sxx) : 0.0;
  return f;
}

ConfidenceInterval bootstrap_ci(std::size_t count, int resamples, double level, std::uint64_t seed,
                                const std::function<double(const std::vector<std::size_t>&)>& stat) {
  if (count == 0) throw std::invalid_argument("bootstrap of an empty sample");
  if (resamples < 2) throw std::invalid_argument("bootstrap needs at least two resamples");
  if (!(level > 0.0 && level < 1.0)) throw std::domain_error("confidence level must lie in (0,1)");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(count);
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    // explicit modulo draw keeps the stream identical across standard libraries
    for (auto& i : idx) i = static_cast<std::size_t>(rng() % count);
    const double v = stat(idx);
    if (std::isfinite(v)) stats.push_back(v);
  }
  if (stats.size() < 2) throw std::runtime_error("bootstrap statistic was not finite on enough resamples");
  const double tail = 0.5 * (1.0 - level);
  return {quantile(stats, tail), quantile(stats, 1.0 - tail), level, resamples};
}

}  // namespace polylab
