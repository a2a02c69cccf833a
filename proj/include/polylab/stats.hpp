#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <vector>

namespace polylab {

/// Neumaier-compensated running sum; order of additions still matters, so
/// callers that need schedule independence add in a fixed order.
class CompensatedSum {
public:
  void add(double v) {
    const double t = s_ + v;
    c_ += std::abs(s_) >= std::abs(v) ? (s_ - t) + v : (v - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

private:
  double s_ = 0.0;
  double c_ = 0.0;
};

/// Count, mean and variance of a sample kept in insertion order.
struct Moments {
  std::int64_t n = 0;
  double mean = 0.0;
  double sd = 0.0;      // sample standard deviation (n - 1)
  double stderr_ = 0.0;  // sd / sqrt(n)
};
Moments moments(const std::vector<double>& xs);

/// Linear-interpolated quantile (type 7) of an unsorted sample.
double quantile(std::vector<double> xs, double q);
double median(std::vector<double> xs);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_se = 0.0;
  std::int64_t points = 0;
};
/// Ordinary least squares y = intercept + slope * x.
LinearFit ols(const std::vector<double>& x, const std::vector<double>& y);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.0;
  int resamples = 0;
};

/// Percentile bootstrap. stat receives a multiset of indices into [0, count).
ConfidenceInterval bootstrap_ci(std::size_t count, int resamples, double level, std::uint64_t seed,
                                const std::function<double(const std::vector<std::size_t>&)>& stat);

}  // namespace polylab
