#pragma once

// Brute-force reference implementations used only by the tests. Everything here
// enumerates walk paths explicitly and reads the environment one site at a time
// through PolymerSystem::weight, independently of the sweep code paths.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "polylab/polymer.hpp"

namespace oracle {

using polylab::Point;
using polylab::PolymerSystem;
using polylab::SpaceTimePoint;

/// Calls fn(path) for every nearest-neighbour path of n steps from x; path[0] == x.
inline void enumerate_paths(const Point& x, int n, const std::function<void(const std::vector<Point>&)>& fn) {
  const int d = x.dim;
  std::vector<Point> path(static_cast<std::size_t>(n) + 1, x);
  std::function<void(int)> rec = [&](int k) {
    if (k == n) {
      fn(path);
      return;
    }
    for (int a = 0; a < d; ++a) {
      for (int s : {-1, 1}) {
        path[k + 1] = path[k] + Point::unit(d, a, s);
        rec(k + 1);
      }
    }
  };
  rec(0);
}

inline double step_prob(int d, int n) { return std::pow(2.0 * d, -n); }

/// Z over (start.t, start.t + n] by explicit path sum.
inline double forward(const PolymerSystem& sys, const SpaceTimePoint& start, int n) {
  double z = 0.0;
  enumerate_paths(start.x, n, [&](const std::vector<Point>& p) {
    double w = 1.0;
    for (int k = 1; k <= n; ++k) w *= sys.weight(start.t + k, p[k]);
    z += w;
  });
  return z * step_prob(sys.dim(), n);
}

/// alpha_n(x, y) as a map over endpoints.
inline std::map<Point, double> alpha(const PolymerSystem& sys, const Point& x, int n) {
  std::map<Point, double> out;
  double z = 0.0;
  enumerate_paths(x, n, [&](const std::vector<Point>& p) {
    double w = 1.0;
    for (int k = 1; k <= n - 1; ++k) w *= sys.weight(k, p[k]);
    out[p[n]] += w;
    z += w;
  });
  for (auto& kv : out) kv.second /= z;
  return out;
}

/// Bridge average of the interior weights between a and b.
inline double pinned(const PolymerSystem& sys, const SpaceTimePoint& a, const SpaceTimePoint& b) {
  const int n = static_cast<int>(b.t - a.t);
  double num = 0.0;
  long count = 0;
  enumerate_paths(a.x, n, [&](const std::vector<Point>& p) {
    if (!(p[n] == b.x)) return;
    double w = 1.0;
    for (int k = 1; k <= n - 1; ++k) w *= sys.weight(a.t + k, p[k]);
    num += w;
    ++count;
  });
  return num / static_cast<double>(count);
}

/// mu_{omega,n}(X_t = z) from the origin.
inline double marginal(const PolymerSystem& sys, int n, int t, const Point& z) {
  double num = 0.0, den = 0.0;
  enumerate_paths(Point::zero(sys.dim()), n, [&](const std::vector<Point>& p) {
    double w = 1.0;
    for (int k = 1; k <= n; ++k) w *= sys.weight(k, p[k]);
    den += w;
    if (p[t] == z) num += w;
  });
  return num / den;
}

/// Plane-to-point value: the reversed walk from end collects weights at times in I.
inline double reverse(const PolymerSystem& sys, const SpaceTimePoint& end, const polylab::TimeInterval& I) {
  const std::int64_t lowest = I.first();
  const int n = static_cast<int>(end.t - lowest);
  if (I.count() == 0) return 1.0;
  double z = 0.0;
  enumerate_paths(end.x, n, [&](const std::vector<Point>& p) {
    double w = 1.0;
    for (int j = 1; j <= n; ++j) {
      const std::int64_t t = end.t - j;
      if (I.contains(t)) w *= sys.weight(t, p[j]);
    }
    z += w;
  });
  return z * step_prob(sys.dim(), n);
}

/// sum_{k=1}^n sum_y alpha_k(x, y) E_{k,y}.
inline double khat(const PolymerSystem& sys, const Point& x, int n) {
  double s = 0.0;
  for (int k = 1; k <= n; ++k)
    for (const auto& [y, a] : alpha(sys, x, k)) s += a * sys.noise(k, y);
  return s;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// P(X_n = x) for the d-dimensional simple walk, by summing the multinomial over
/// the number of steps spent on each axis.
inline double heat_kernel_closed(const Point& x, int n) {
  const int d = x.dim;
  std::function<double(int, int)> rec = [&](int axis, int left) -> double {
    if (axis == d - 1) {
      const int m = left;
      const int a = std::abs(x[axis]);
      if (a > m || (m - a) % 2) return 0.0;
      return binomial(m, (m + a) / 2) * std::pow(0.5, m);
    }
    double s = 0.0;
    for (int m = 0; m <= left; ++m) {
      const int a = std::abs(x[axis]);
      if (a > m || (m - a) % 2) continue;
      const double axis_prob = binomial(m, (m + a) / 2) * std::pow(0.5, m);
      // choose which m of the remaining steps use this axis, each with prob 1/(remaining axes)
      const double pick = binomial(left, m) * std::pow(1.0 / (d - axis), m) *
                          std::pow(1.0 - 1.0 / (d - axis), left - m);
      s += pick * axis_prob * rec(axis + 1, left - m);
    }
    return s;
  };
  return rec(0, n);
}

/// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace oracle
