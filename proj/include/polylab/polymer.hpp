#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "polylab/env.hpp"
#include "polylab/lattice.hpp"

namespace polylab {

/// Spatial truncation of sweeps. With sigmas <= 0 the sweep keeps the full
/// light cone and is exact; otherwise the walk is killed once it leaves the
/// sup-norm radius ceil(sigmas * sqrt(k/d)) + 2 around its start, which
/// changes partition functions by far less than Monte Carlo resolution.
/// log_rule switches to the radius ceil(s sqrt(k) log k) + 2 used for the
/// martingale-type sums, with s = sigmas when positive and 1 otherwise.
struct Truncation {
  double sigmas = 0.0;
  bool log_rule = false;
  std::int64_t radius(std::int64_t k, int d) const;
  bool exact() const { return !log_rule && sigmas <= 0.0; }
  static Truncation logarithmic(double scale = 1.0) { return {scale, true}; }
};

/// Environment seed + law + space-time shift theta_{k,x}. Immutable; every
/// partition-function variant reads omega through this object.
class PolymerSystem {
public:
  PolymerSystem(EnvSpec env, std::uint64_t seed, int d, SpaceTimePoint origin_shift = {});

  const EnvSpec& env() const { return env_; }
  std::uint64_t seed() const { return seed_; }
  int dim() const { return d_; }
  const SpaceTimePoint& origin_shift() const { return shift_; }
  const Truncation& truncation() const { return trunc_; }

  PolymerSystem with_truncation(Truncation t) const;
  PolymerSystem shifted(const SpaceTimePoint& by) const;
  /// Copy in which the raw environment value at absolute key (t, x) is replaced.
  PolymerSystem with_override(std::int64_t abs_t, const Point& abs_x, double omega) const;

  double omega(std::int64_t t, const Point& x) const;
  double weight(std::int64_t t, const Point& x) const;
  double noise(std::int64_t t, const Point& x) const { return weight(t, x) - 1.0; }

  /// field(y) *= w_{t,y}. With parity in {0,1} only cells whose absolute
  /// (shifted) coordinates satisfy (t + sum y) % 2 == parity are touched.
  void multiply_weights(std::int64_t t, BoxField& field, int parity = -1) const;
  BoxField weights(std::int64_t t, const Box& box) const;

private:
  struct Override {
    std::int64_t t;
    Point x;
    double omega;
  };
  double omega_raw(std::int64_t abs_t, const Point& abs_x) const;
  void apply_overrides(std::int64_t t, BoxField& field, int parity) const;

  EnvSpec env_;
  std::uint64_t seed_;
  int d_;
  SpaceTimePoint shift_;
  Truncation trunc_;
  std::vector<Override> overrides_;
};

/// Integer time set I with explicit endpoint inclusion. Environment only
/// exists at times >= 1, so first() is clipped there.
struct TimeInterval {
  double lo = 0;
  double hi = 0;
  bool lo_closed = false;
  bool hi_closed = true;

  static TimeInterval open_closed(std::int64_t a, std::int64_t b) { return {double(a), double(b), false, true}; }
  static TimeInterval closed_open(std::int64_t a, std::int64_t b) { return {double(a), double(b), true, false}; }
  static TimeInterval open(std::int64_t a, std::int64_t b) { return {double(a), double(b), false, false}; }

  std::int64_t first() const;
  std::int64_t last() const;
  bool contains(std::int64_t t) const { return t >= first() && t <= last(); }
  std::int64_t count() const { return std::max<std::int64_t>(0, last() - first() + 1); }
};

/// Per-time site masks plus an optional weight g(X_0) of the starting point.
struct PathConstraint {
  struct TimeMask {
    std::int64_t t;
    std::function<double(const Point&)> weight;
  };
  std::vector<TimeMask> masks;
  std::function<double(const Point&)> start_weight;

  static PathConstraint confine(const Box& box, std::int64_t t_first, std::int64_t t_last);
  static PathConstraint hit(std::int64_t t, const Point& z);
  PathConstraint& also(const PathConstraint& other);

  bool active_at(std::int64_t t) const;
  void apply(std::int64_t t, BoxField& field) const;
};

/// Z over times (start.t, start.t + n] for the walk started at start.
double forward_partition(const PolymerSystem& sys, const SpaceTimePoint& start, std::int64_t n,
                         const PathConstraint* constraint = nullptr);

/// Observer for forward sweeps: step k (1-based), the averaged slice before
/// the time-k weights, and the slice after weights/masks.
using SweepObserver = std::function<void(std::int64_t k, const BoxField& averaged, const BoxField& rho)>;

/// Unnormalized walk density rho_n; sum(rho_n) = Z_n.
BoxField forward_sweep(const PolymerSystem& sys, const SpaceTimePoint& start, std::int64_t n,
                       const PathConstraint* constraint = nullptr, const SweepObserver& observer = {});

/// E[Z_k^2] for k = 0..n. Two independent walks collect exp(lambda(2 beta) - 2 lambda(beta))
/// per meeting, and their difference moves like two steps of a single walk, so this is a
/// deterministic sweep of the difference walk. rule bounds its support at time 2k.
std::vector<double> second_moment_curve(const EnvSpec& env, int d, std::int64_t n,
                                        const Truncation& rule = {6.0, false});

/// {Z_n^x : x in start_box} for walks started at time 0, one backward sweep.
BoxField all_starts_partition(const PolymerSystem& sys, std::int64_t n, const Box& start_box);

/// V_t(x) = Z_{t_end - t} o theta_{t,x} for t = t_begin..t_end (index t - t_begin),
/// each slice on target.expanded(radius(t - t_begin)).
std::vector<BoxField> backward_slices(const PolymerSystem& sys, std::int64_t t_begin, std::int64_t t_end,
                                      const Box& target);

/// Plane-to-point partition function of the walk ending at `end`, collecting I.
double reverse_partition(const PolymerSystem& sys, const SpaceTimePoint& end, const TimeInterval& interval,
                         const PathConstraint* constraint = nullptr);

/// reverse_partition for every endpoint y in box at time k.
BoxField reverse_partition_field(const PolymerSystem& sys, std::int64_t k, const TimeInterval& interval,
                                 const Box& box);

/// Window length ceil(k^{1/8}) (at least 1) of the reverse factors in alpha-tilde and M_n.
std::int64_t reverse_window(std::int64_t k);

/// Bridge partition function between a and b, endpoint environments excluded.
double pinned_partition(const PolymerSystem& sys, const SpaceTimePoint& a, const SpaceTimePoint& b);

/// alpha_n(x, .) = Z_{n-1}^x[1{X_n = .}] / Z_{n-1}^x.
BoxField polymer_measure_alpha(const PolymerSystem& sys, const Point& x, std::int64_t n);

struct AlphaTilde {
  BoxField values;
  std::int64_t clipped = 0;
};
AlphaTilde alpha_tilde(const PolymerSystem& sys, const Point& x, std::int64_t k);

/// mu_{omega,n}(X_t = x) for the walk from the origin.
double path_marginal(const PolymerSystem& sys, std::int64_t n, std::int64_t t, const Point& x);
/// Whole time-t slice of the polymer marginal (forward-backward).
BoxField path_marginal_slice(const PolymerSystem& sys, std::int64_t n, std::int64_t t);

struct SheKpzFields {
  std::int64_t n = 0;
  /// u[k] holds Z_{n-k} o theta_{k,.}: u[n] == 1 and u[0] is the all-starts field.
  std::vector<BoxField> u;
  std::vector<BoxField> h;  // log u
  double residual = 0.0;
  std::int64_t residual_sites = 0;
};
/// Discrete SHE solution and its Cole-Hopf transform. In the forward SHE clock
/// j = n - k the slices solve U(j+1) - U(j) = Lap U(j) + (2d)^{-1} sum_{y~x} U(j,y) X(j,y)
/// with U(0) = 1 and X(j,y) = exp(beta omega_{n-j,y} - lambda) - 1; `residual` is the
/// largest violation of that equation over all computed sites.
SheKpzFields she_kpz_fields(const PolymerSystem& sys, std::int64_t n, const Box& box);

}  // namespace polylab
