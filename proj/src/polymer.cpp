#include "polylab/polymer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polylab {

namespace {

int mod2(std::int64_t v) { return static_cast<int>(((v % 2) + 2) % 2); }

template <class OmegaToWeight>
void multiply_rows(std::uint64_t seed, std::int64_t abs_t, const Point& shift_x,
                   BoxField& field, int parity, OmegaToWeight&& to_weight) {
  const auto key = Philox4x32::key_from_seed(seed);
  for_each_row(field.box, [&](const Point& row, std::int64_t off) {
    const Point q = row + shift_x;
    auto ctr = detail::site_counter(abs_t, q);
    double* v = field.values.data() + off;
    const std::int64_t len = field.box.ext[0];
    std::int64_t i0 = 0;
    const bool every_other = parity >= 0;
    if (every_other && mod2(abs_t + q.coord_sum()) != parity) i0 = 1;
    // sites x and x + 2 share one Philox call (lanes 0 and 1)
    auto stride2 = [&](std::int64_t i) {
      if (i < len && detail::site_lane(static_cast<std::int32_t>(q[0] + i)) == 1) {
        ctr[1] = detail::site_group(static_cast<std::int32_t>(q[0] + i));
        const auto out = Philox4x32::apply(ctr, key);
        v[i] *= to_weight(open_unit_interval(detail::lane_bits(out, 1)));
        i += 2;
      }
      for (; i + 2 < len; i += 4) {
        ctr[1] = detail::site_group(static_cast<std::int32_t>(q[0] + i));
        const auto out = Philox4x32::apply(ctr, key);
        v[i] *= to_weight(open_unit_interval(detail::lane_bits(out, 0)));
        v[i + 2] *= to_weight(open_unit_interval(detail::lane_bits(out, 1)));
      }
      if (i < len) {
        ctr[1] = detail::site_group(static_cast<std::int32_t>(q[0] + i));
        const auto out = Philox4x32::apply(ctr, key);
        v[i] *= to_weight(open_unit_interval(detail::lane_bits(out, 0)));
      }
    };
    stride2(i0);
    if (!every_other) stride2(1);
  });
}

}  // namespace

std::int64_t Truncation::radius(std::int64_t k, int d) const {
  if (exact() || k <= 1) return k;
  if (log_rule) {
    const double kk = static_cast<double>(k);
    const double s = sigmas > 0.0 ? sigmas : 1.0;
    return std::min(k, static_cast<std::int64_t>(std::ceil(s * std::sqrt(kk) * std::log(kk))) + 2);
  }
  const auto r = static_cast<std::int64_t>(std::ceil(sigmas * std::sqrt(static_cast<double>(k) / d))) + 2;
  return std::min(k, r);
}

PolymerSystem::PolymerSystem(EnvSpec env, std::uint64_t seed, int d, SpaceTimePoint origin_shift)
    : env_(env), seed_(seed), d_(d), shift_(origin_shift) {
  if (d < 1 || d > kMaxDim) throw std::domain_error("PolymerSystem: dimension must be in [1, 4]");
  if (shift_.x.dim != d) {
    if (shift_.x.c != Point().c) throw std::domain_error("PolymerSystem: shift dimension mismatch");
    shift_.x = Point::zero(d);
  }
  if (shift_.t < 0) throw std::domain_error("PolymerSystem: time shift must be >= 0");
}

PolymerSystem PolymerSystem::with_truncation(Truncation t) const {
  PolymerSystem s = *this;
  s.trunc_ = t;
  return s;
}

PolymerSystem PolymerSystem::shifted(const SpaceTimePoint& by) const {
  PolymerSystem s = *this;
  s.shift_.t += by.t;
  s.shift_.x = s.shift_.x + by.x;
  return s;
}

PolymerSystem PolymerSystem::with_override(std::int64_t abs_t, const Point& abs_x, double omega) const {
  PolymerSystem s = *this;
  for (auto& o : s.overrides_) {
    if (o.t == abs_t && o.x == abs_x) {
      o.omega = omega;
      return s;
    }
  }
  s.overrides_.push_back({abs_t, abs_x, omega});
  return s;
}

double PolymerSystem::omega_raw(std::int64_t abs_t, const Point& abs_x) const {
  for (const auto& o : overrides_)
    if (o.t == abs_t && o.x == abs_x) return o.omega;
  return sample_omega(env_, EnvKey{seed_, abs_t, abs_x});
}

double PolymerSystem::omega(std::int64_t t, const Point& x) const { return omega_raw(t + shift_.t, x + shift_.x); }

double PolymerSystem::weight(std::int64_t t, const Point& x) const {
  if (env_.beta == 0.0) return 1.0;
  return std::exp(env_.beta * omega(t, x) - env_.lambda);
}

void PolymerSystem::multiply_weights(std::int64_t t, BoxField& field, int parity) const {
  const std::int64_t abs_t = t + shift_.t;
  if (abs_t < 1) throw std::domain_error("environment is only defined at times >= 1");
  if (abs_t > 0xFFFFFFFFll) throw std::domain_error("time index exceeds 32 bits");
  if (env_.beta == 0.0 || field.box.empty()) return;
  if (d_ == 4) {
    for (int i = 2; i < 4; ++i) {
      const std::int64_t lo = field.box.lo[i] + shift_.x[i], hi = field.box.hi(i) + shift_.x[i];
      if (std::max(std::abs(lo), std::abs(hi)) >= (1 << 15))
        throw std::domain_error("coordinates exceed the packable range for d = 4");
    }
  }
  if (!overrides_.empty()) {
    apply_overrides(t, field, parity);
    return;
  }
  const double beta = env_.beta, lambda = env_.lambda;
  switch (env_.family) {
    case Family::Gaussian:
      multiply_rows(seed_, abs_t, shift_.x, field, parity,
                    [=](double u) { return std::exp(beta * detail::normal_quantile_unchecked(u) - lambda); });
      break;
    case Family::Rademacher: {
      const double lo = std::exp(-beta - lambda), hi = std::exp(beta - lambda);
      multiply_rows(seed_, abs_t, shift_.x, field, parity, [=](double u) { return u < 0.5 ? lo : hi; });
      break;
    }
    case Family::Bernoulli: {
      const double p = env_.bernoulli_p;
      const double one = std::exp(beta * (1.0 - p) - lambda), zero = std::exp(-beta * p - lambda);
      multiply_rows(seed_, abs_t, shift_.x, field, parity, [=](double u) { return u < p ? one : zero; });
      break;
    }
    case Family::Uniform: {
      const double h = 0.5 * (env_.uniform_b - env_.uniform_a);
      multiply_rows(seed_, abs_t, shift_.x, field, parity,
                    [=](double u) { return std::exp(beta * (2.0 * u - 1.0) * h - lambda); });
      break;
    }
  }
}

void PolymerSystem::apply_overrides(std::int64_t t, BoxField& field, int parity) const {
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(field.values.size()); ++i) {
    const Point y = field.box.point_at(i);
    if (parity >= 0 && mod2(t + shift_.t + y.coord_sum() + shift_.x.coord_sum()) != parity) continue;
    field.values[i] *= weight(t, y);
  }
}

BoxField PolymerSystem::weights(std::int64_t t, const Box& box) const {
  BoxField f(box, 1.0);
  multiply_weights(t, f);
  return f;
}

// ---------------------------------------------------------------------------

std::int64_t TimeInterval::first() const {
  const double f = lo_closed ? std::ceil(lo) : std::floor(lo) + 1.0;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(f));
}

std::int64_t TimeInterval::last() const {
  const double l = hi_closed ? std::floor(hi) : std::ceil(hi) - 1.0;
  return static_cast<std::int64_t>(l);
}

PathConstraint PathConstraint::confine(const Box& box, std::int64_t t_first, std::int64_t t_last) {
  PathConstraint c;
  for (std::int64_t t = t_first; t <= t_last; ++t)
    c.masks.push_back({t, [box](const Point& y) { return box.contains(y) ? 1.0 : 0.0; }});
  return c;
}

PathConstraint PathConstraint::hit(std::int64_t t, const Point& z) {
  PathConstraint c;
  c.masks.push_back({t, [z](const Point& y) { return y == z ? 1.0 : 0.0; }});
  return c;
}

PathConstraint& PathConstraint::also(const PathConstraint& other) {
  masks.insert(masks.end(), other.masks.begin(), other.masks.end());
  if (other.start_weight) {
    if (start_weight) {
      auto a = start_weight, b = other.start_weight;
      start_weight = [a, b](const Point& x) { return a(x) * b(x); };
    } else {
      start_weight = other.start_weight;
    }
  }
  return *this;
}

bool PathConstraint::active_at(std::int64_t t) const {
  return std::any_of(masks.begin(), masks.end(), [t](const TimeMask& m) { return m.t == t; });
}

void PathConstraint::apply(std::int64_t t, BoxField& field) const {
  for (const auto& m : masks) {
    if (m.t != t) continue;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(field.values.size()); ++i)
      if (field.values[i] != 0.0) field.values[i] *= m.weight(field.box.point_at(i));
  }
}

// ---------------------------------------------------------------------------

BoxField forward_sweep(const PolymerSystem& sys, const SpaceTimePoint& start, std::int64_t n,
                       const PathConstraint* constraint, const SweepObserver& observer) {
  if (n < 0) throw std::domain_error("forward sweep: horizon must be >= 0");
  if (start.x.dim != sys.dim()) throw std::domain_error("forward sweep: start point dimension mismatch");
  const double g0 = (constraint && constraint->start_weight) ? constraint->start_weight(start.x) : 1.0;
  BoxField rho(Box::single(start.x), g0);
  if (constraint) constraint->apply(start.t, rho);
  const int parity = mod2(start.t + start.x.coord_sum() + sys.origin_shift().t + sys.origin_shift().x.coord_sum());
  for (std::int64_t k = 1; k <= n; ++k) {
    const Box target = Box::centered(start.x, sys.truncation().radius(k, sys.dim()));
    BoxField next = neighbor_average(rho, target.intersect(rho.box.expanded(1)));
    BoxField averaged;
    if (observer) averaged = next;
    sys.multiply_weights(start.t + k, next, parity);
    if (constraint) constraint->apply(start.t + k, next);
    if (observer) observer(k, averaged, next);
    rho = std::move(next);
  }
  return rho;
}

double forward_partition(const PolymerSystem& sys, const SpaceTimePoint& start, std::int64_t n,
                         const PathConstraint* constraint) {
  // Unit weights conserve mass exactly; skip the sweep so beta = 0 yields 1 bit-exactly.
  if (sys.env().beta == 0.0 && constraint == nullptr && sys.truncation().exact()) {
    if (n < 0) throw std::domain_error("forward sweep: horizon must be >= 0");
    return 1.0;
  }
  return forward_sweep(sys, start, n, constraint).sum();
}

namespace {

// Backward recursion V_{t-1} = avg(w_t * V_t); calls keep(t, V_t) from t_end down to t_begin.
template <class Keep>
void run_backward(const PolymerSystem& sys, std::int64_t t_begin, std::int64_t t_end, const Box& target,
                  Keep&& keep) {
  if (t_end < t_begin) throw std::domain_error("backward sweep: t_end must be >= t_begin");
  const int d = sys.dim();
  auto domain = [&](std::int64_t t) { return target.expanded(sys.truncation().radius(t - t_begin, d)); };
  BoxField v(domain(t_end), 1.0);
  keep(t_end, v);
  for (std::int64_t t = t_end; t > t_begin; --t) {
    sys.multiply_weights(t, v);
    v = neighbor_average(v, domain(t - 1));
    keep(t - 1, v);
  }
}

}  // namespace

std::vector<BoxField> backward_slices(const PolymerSystem& sys, std::int64_t t_begin, std::int64_t t_end,
                                      const Box& target) {
  std::vector<BoxField> out(static_cast<std::size_t>(t_end - t_begin + 1));
  run_backward(sys, t_begin, t_end, target, [&](std::int64_t t, const BoxField& v) { out[t - t_begin] = v; });
  return out;
}

std::vector<double> second_moment_curve(const EnvSpec& env, int d, std::int64_t n, const Truncation& rule) {
  if (n < 0) throw std::domain_error("second_moment_curve: n must be >= 0");
  const EnvSpec doubled = EnvSpec::make(env.family, 2.0 * env.beta, env.bernoulli_p, env.uniform_a, env.uniform_b);
  const double meet = std::exp(doubled.lambda - 2.0 * env.lambda);
  const Point origin = Point::zero(d);
  std::vector<double> out{1.0};
  BoxField u(Box::single(origin), 1.0);
  for (std::int64_t k = 1; k <= n; ++k) {
    u = neighbor_average(u, Box::centered(origin, rule.radius(2 * k - 1, d)));
    u = neighbor_average(u, Box::centered(origin, rule.radius(2 * k, d)));
    u.ref(origin) *= meet;
    out.push_back(u.sum());
  }
  return out;
}

BoxField all_starts_partition(const PolymerSystem& sys, std::int64_t n, const Box& start_box) {
  if (n < 0) throw std::domain_error("all_starts_partition: horizon must be >= 0");
  BoxField result;
  run_backward(sys, 0, n, start_box, [&](std::int64_t t, const BoxField& v) {
    if (t == 0) result = v;
  });
  return result;
}

std::int64_t reverse_window(std::int64_t k) {
  if (k < 1) return 1;
  auto m = static_cast<std::int64_t>(std::ceil(std::pow(static_cast<double>(k), 0.125) - 1e-12));
  return std::max<std::int64_t>(1, m);
}

double reverse_partition(const PolymerSystem& sys, const SpaceTimePoint& end, const TimeInterval& interval,
                         const PathConstraint* constraint) {
  if (interval.last() >= end.t) throw std::domain_error("reverse_partition: interval must lie before the endpoint");
  std::int64_t lowest = interval.first();
  if (constraint)
    for (const auto& m : constraint->masks) lowest = std::min(lowest, m.t);
  if (interval.count() == 0 && (!constraint || constraint->masks.empty())) return 1.0;
  BoxField rho(Box::single(end.x), 1.0);
  const int parity = mod2(end.t + end.x.coord_sum() + sys.origin_shift().t + sys.origin_shift().x.coord_sum());
  for (std::int64_t t = end.t - 1; t >= lowest; --t) {
    const Box target = Box::centered(end.x, sys.truncation().radius(end.t - t, sys.dim()));
    rho = neighbor_average(rho, target.intersect(rho.box.expanded(1)));
    if (interval.contains(t)) sys.multiply_weights(t, rho, parity);
    if (constraint) constraint->apply(t, rho);
  }
  return rho.sum();
}

BoxField reverse_partition_field(const PolymerSystem& sys, std::int64_t k, const TimeInterval& interval,
                                 const Box& box) {
  if (interval.last() >= k) throw std::domain_error("reverse_partition_field: interval must lie before time k");
  if (interval.count() == 0) return BoxField(box, 1.0);
  const std::int64_t first = interval.first();
  BoxField f = sys.weights(first, box.expanded(k - first));
  for (std::int64_t t = first + 1; t < k; ++t) {
    f = neighbor_average(f, box.expanded(k - t));
    if (interval.contains(t)) sys.multiply_weights(t, f);
  }
  return neighbor_average(f, box);
}

double pinned_partition(const PolymerSystem& sys, const SpaceTimePoint& a, const SpaceTimePoint& b) {
  if (b.t - a.t < 2) throw std::domain_error("pinned_partition: need b.t - a.t >= 2");
  if (!parity_connected(a, b)) throw std::domain_error("pinned_partition: endpoints are not parity connected");
  const PolymerSystem exact = sys.with_truncation({});
  const BoxField rho = forward_sweep(exact, a, b.t - a.t - 1);
  const double hit = neighbor_average(rho, Box::single(b.x)).values[0];
  const double p = heat_kernel(sys.dim(), b.t - a.t).at(b.x - a.x);
  if (p == 0.0) throw std::domain_error("pinned_partition: bridge is undefined");
  return hit / p;
}

BoxField polymer_measure_alpha(const PolymerSystem& sys, const Point& x, std::int64_t n) {
  if (n < 1) throw std::domain_error("polymer_measure_alpha: n must be >= 1");
  const BoxField rho = forward_sweep(sys, {0, x}, n - 1);
  const double z = rho.sum();
  if (!(z > 0.0)) throw std::runtime_error("polymer_measure_alpha: vanishing partition function");
  BoxField alpha = neighbor_average(rho);
  for (double& v : alpha.values) v /= z;
  return alpha;
}

AlphaTilde alpha_tilde(const PolymerSystem& sys, const Point& x, std::int64_t k) {
  if (k < 2) throw std::domain_error("alpha_tilde: k must be >= 2");
  const std::int64_t m = reverse_window(k);
  const Box box = Box::centered(x, sys.truncation().radius(k, sys.dim()));
  AlphaTilde out{reverse_partition_field(sys, k, TimeInterval::closed_open(k - m, k), box), 0};
  const BoxField p = heat_kernel(sys.dim(), k);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(out.values.values.size()); ++i) {
    double& v = out.values.values[i];
    v *= p.at(box.point_at(i) - x);
    if (v > 1.0) {
      v = 1.0;
      ++out.clipped;
    }
  }
  return out;
}

double path_marginal(const PolymerSystem& sys, std::int64_t n, std::int64_t t, const Point& x) {
  if (t < 1 || t > n) throw std::domain_error("path_marginal: need 1 <= t <= n");
  const SpaceTimePoint origin{0, Point::zero(sys.dim())};
  const PathConstraint at = PathConstraint::hit(t, x);
  const double num = forward_sweep(sys, origin, n, &at).sum();
  return num / forward_sweep(sys, origin, n).sum();
}

BoxField path_marginal_slice(const PolymerSystem& sys, std::int64_t n, std::int64_t t) {
  if (t < 1 || t > n) throw std::domain_error("path_marginal_slice: need 1 <= t <= n");
  BoxField mu = forward_sweep(sys, {0, Point::zero(sys.dim())}, t);
  const BoxField back = backward_slices(sys, t, n, mu.box).front();
  for (std::size_t i = 0; i < mu.values.size(); ++i) mu.values[i] *= back.values[i];
  const double z = mu.sum();
  for (double& v : mu.values) v /= z;
  return mu;
}

SheKpzFields she_kpz_fields(const PolymerSystem& sys, std::int64_t n, const Box& box) {
  if (n < 0) throw std::domain_error("she_kpz_fields: n must be >= 0");
  const PolymerSystem exact = sys.with_truncation({});
  SheKpzFields out;
  out.n = n;
  out.u = backward_slices(exact, 0, n, box);
  out.h.reserve(out.u.size());
  for (const auto& u : out.u) {
    BoxField h = u;
    for (double& v : h.values) v = std::log(v);
    out.h.push_back(std::move(h));
  }
  const int d = sys.dim();
  const double inv = 1.0 / (2.0 * d);
  for (std::int64_t j = 0; j < n; ++j) {
    const BoxField& cur = out.u[n - j];
    const BoxField& next = out.u[n - j - 1];
    const BoxField noise = [&] {
      BoxField x = exact.weights(n - j, cur.box);
      for (double& v : x.values) v -= 1.0;
      return x;
    }();
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(next.values.size()); ++i) {
      const Point x = next.box.point_at(i);
      const double ux = cur.at(x);
      double lap = 0.0, forcing = 0.0;
      for (int a = 0; a < d; ++a) {
        for (int s : {-1, 1}) {
          const Point y = x + Point::unit(d, a, s);
          lap += cur.at(y) - ux;
          forcing += cur.at(y) * noise.at(y);
        }
      }
      const double r = (next.values[i] - ux) - inv * lap - inv * forcing;
      out.residual = std::max(out.residual, std::abs(r));
      ++out.residual_sites;
    }
  }
  return out;
}

}  // namespace polylab
