#include "polylab/fields.hpp"

#include <cmath>
#include <stdexcept>

#include "polylab/stats.hpp"

namespace polylab {

namespace {

double lattice_scale(int d, std::int64_t n) { return std::pow(static_cast<double>(n), -0.5 * d); }

int mod2(std::int64_t v) { return static_cast<int>(((v % 2) + 2) % 2); }

// Welford accumulator for inner Monte Carlo loops.
struct Running {
  std::int64_t n = 0;
  double mean = 0.0, m2 = 0.0;
  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  double stderr_() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0; }
};

// sum_{k=cut+1}^{n} <A_k, P^k F> with A_k(y) = reverse Z^{k,y} on [k - m_k, k) times E_{k,y}.
double martingale_sum(const PolymerSystem& sys, std::int64_t n, std::int64_t cut, const BoxField& F,
                      double radius_scale) {
  if (sys.env().beta == 0.0) return 0.0;
  const Truncation rule = Truncation::logarithmic(radius_scale);
  const int d = sys.dim();
  // P^j F must be exact on the support grown by reach[j] so that later steps see exact values
  std::vector<std::int64_t> reach(static_cast<std::size_t>(n) + 2, 0);
  for (std::int64_t j = n; j >= 1; --j) {
    const std::int64_t own = j > cut ? rule.radius(j, d) : 0;
    reach[j] = std::min(j, std::max(own, reach[j + 1] + 1));
  }
  BoxField G = F;
  CompensatedSum total;
  for (std::int64_t k = 1; k <= n; ++k) {
    G = neighbor_average(G, F.box.expanded(reach[k]));
    if (k <= cut) continue;
    const Box D = F.box.expanded(rule.radius(k, d));
    const std::int64_t m = reverse_window(k);
    const BoxField rev = reverse_partition_field(sys, k, TimeInterval::closed_open(k - m, k), D);
    const BoxField w = sys.weights(k, D);
    std::size_t i = 0;
    rev.for_each([&](const Point& y, double r) {
      total.add(r * (w.values[i++] - 1.0) * G.at(y));
    });
  }
  return total.value();
}

}  // namespace

double TestFunction::operator()(const double* x, int d) const {
  switch (kind) {
    case Kind::IndicatorBox:
      for (int i = 0; i < d; ++i)
        if (std::abs(x[i]) > support) return 0.0;
      return 1.0;
    case Kind::SmoothBump: {
      double r2 = 0.0;
      for (int i = 0; i < d; ++i) r2 += x[i] * x[i];
      r2 /= support * support;
      return r2 < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - r2)) : 0.0;
    }
    case Kind::TensorHat: {
      double v = 1.0;
      for (int i = 0; i < d; ++i) v *= std::max(0.0, 1.0 - std::abs(x[i]) / support);
      return v;
    }
  }
  return 0.0;
}

BoxField TestFunction::on_lattice(int d, std::int64_t n) const {
  if (n < 1) throw std::domain_error("test function grid needs n >= 1");
  if (!(support > 0.0)) throw std::domain_error("test function support must be positive");
  const double root = std::sqrt(static_cast<double>(n));
  const auto r = static_cast<std::int64_t>(std::floor(support * root + 1e-9));
  BoxField F(Box::centered(Point::zero(d), r));
  double x[kMaxDim] = {};
  for (std::size_t i = 0; i < F.values.size(); ++i) {
    const Point p = F.box.point_at(static_cast<std::int64_t>(i));
    for (int a = 0; a < d; ++a) x[a] = p[a] / root;
    F.values[i] = (*this)(x, d);
  }
  return F;
}

std::string TestFunction::name() const {
  switch (kind) {
    case Kind::IndicatorBox: return "indicator";
    case Kind::SmoothBump: return "bump";
    case Kind::TensorHat: return "hat";
  }
  return "unknown";
}

TestFunction::Kind TestFunction::parse_kind(const std::string& s) {
  if (s == "indicator" || s == "box") return Kind::IndicatorBox;
  if (s == "bump") return Kind::SmoothBump;
  if (s == "hat") return Kind::TensorHat;
  throw std::invalid_argument("unknown test function '" + s + "'");
}

WindowParams WindowParams::make(std::int64_t n, double delta) {
  if (!(delta > 0.0 && delta < 1.0 / 6.0)) throw std::domain_error("delta must lie in (0, 1/6)");
  if (n < 1) throw std::domain_error("window needs n >= 1");
  WindowParams w;
  w.delta = delta;
  w.n = n;
  w.cut = static_cast<std::int64_t>(std::floor(std::pow(static_cast<double>(n), 1.0 - delta) + 1e-9));
  if (w.cut >= n && n > 1) w.cut = n - 1;
  return w;
}

FluctPair fluct_from_field(const BoxField& z, const BoxField& F, std::int64_t n, double logZ_mean) {
  if (!std::isfinite(logZ_mean)) throw std::domain_error("injected E[log Z] must be finite");
  if (!(z.box == F.box)) throw std::invalid_argument("partition field and test function live on different boxes");
  CompensatedSum s, k;
  for (std::size_t i = 0; i < F.values.size(); ++i) {
    const double f = F.values[i];
    if (f == 0.0) continue;
    s.add(f * (z.values[i] - 1.0));
    k.add(f * (std::log(z.values[i]) - logZ_mean));
  }
  const double scale = lattice_scale(F.dim(), n);
  return {scale * s.value(), scale * k.value()};
}

FluctPair fluct_fields(const PolymerSystem& sys, std::int64_t n, const TestFunction& f, double logZ_mean) {
  if (!std::isfinite(logZ_mean)) throw std::domain_error("injected E[log Z] must be finite");
  const BoxField F = f.on_lattice(sys.dim(), n);
  return fluct_from_field(all_starts_partition(sys, n, F.box), F, n, logZ_mean);
}

WindowTerms window_decomposition(const PolymerSystem& sys, std::int64_t n, const TestFunction& f, double delta,
                                 double logZ_cut_mean, double ratio_mean) {
  const WindowParams w = WindowParams::make(n, delta);
  const BoxField F = f.on_lattice(sys.dim(), n);
  return window_from_fields(all_starts_partition(sys, n, F.box), all_starts_partition(sys, w.cut, F.box), F, n,
                            logZ_cut_mean, ratio_mean);
}

WindowTerms window_from_fields(const BoxField& zn, const BoxField& zc, const BoxField& F, std::int64_t n,
                               double logZ_cut_mean, double ratio_mean) {
  if (!std::isfinite(logZ_cut_mean) || !std::isfinite(ratio_mean))
    throw std::domain_error("injected means must be finite");
  if (!(zn.box == F.box) || !(zc.box == F.box))
    throw std::invalid_argument("partition fields and test function live on different boxes");
  CompensatedSum s, S, k;
  WindowTerms out;
  out.K_delta = BoxField(F.box);
  for (std::size_t i = 0; i < F.values.size(); ++i) {
    out.K_delta.values[i] = std::log(zn.values[i] / zc.values[i]) - ratio_mean;
    const double fv = F.values[i];
    if (fv == 0.0) continue;
    s.add(fv * (zc.values[i] - 1.0));
    S.add(fv * (zn.values[i] - zc.values[i]));
    k.add(fv * (std::log(zc.values[i]) - logZ_cut_mean));
  }
  const double scale = lattice_scale(F.dim(), n);
  out.s_delta = scale * s.value();
  out.S_delta = scale * S.value();
  out.k_delta = scale * k.value();
  return out;
}

double martingale_approx(const PolymerSystem& sys, std::int64_t n, double delta, const TestFunction& f,
                         double radius_scale) {
  const WindowParams w = WindowParams::make(n, delta);
  const BoxField F = f.on_lattice(sys.dim(), n);
  return lattice_scale(sys.dim(), n) * martingale_sum(sys, n, w.cut, F, radius_scale);
}

double martingale_approx_at(const PolymerSystem& sys, std::int64_t n, double delta, const Point& x,
                            double radius_scale) {
  const WindowParams w = WindowParams::make(n, delta);
  return martingale_sum(sys, n, w.cut, BoxField(Box::single(x), 1.0), radius_scale);
}

double khat(const PolymerSystem& sys, std::int64_t n, const Point& x, double radius_scale) {
  if (n < 1) throw std::domain_error("khat: n must be >= 1");
  // sum_y alpha_k(y) E_{k,y} = (sum rho_k - sum avg(rho_{k-1})) / Z_{k-1}
  const PolymerSystem trunc = sys.with_truncation(Truncation::logarithmic(radius_scale));
  double prev = 1.0;
  CompensatedSum total;
  forward_sweep(trunc, {0, x}, n, nullptr, [&](std::int64_t, const BoxField& averaged, const BoxField& rho) {
    const double z = rho.sum();
    total.add((z - averaged.sum()) / prev);
    prev = z;
  });
  return total.value();
}

InnerEstimate conditional_log_mean(const EnvSpec& env, const BoxField& alpha, std::int64_t k, int samples,
                                   std::uint64_t seed) {
  if (samples < 2) throw std::invalid_argument("inner Monte Carlo needs at least two samples");
  int parity = -1;
  for (std::size_t i = 0; i < alpha.values.size(); ++i) {
    if (alpha.values[i] != 0.0) {
      parity = mod2(k + alpha.box.point_at(static_cast<std::int64_t>(i)).coord_sum());
      break;
    }
  }
  const double mass = alpha.sum();
  Running acc;
  for (int s = 0; s < samples; ++s) {
    const PolymerSystem fresh(env, mix64(seed ^ mix64(static_cast<std::uint64_t>(s) + 1)), alpha.dim());
    BoxField tmp = alpha;
    fresh.multiply_weights(k, tmp, parity);
    acc.add(std::log1p(tmp.sum() - mass));
  }
  return {acc.mean, acc.stderr_()};
}

DoobIncrements doob_increments(const PolymerSystem& sys, std::int64_t n, const Point& x, int inner_samples,
                               std::uint64_t inner_seed, const std::vector<double>& mean_increments) {
  if (inner_samples < 1000) throw std::invalid_argument("doob_increments: inner_samples must be >= 1000");
  if (n < 1) throw std::domain_error("doob_increments: n must be >= 1");
  if (!mean_increments.empty() && static_cast<std::int64_t>(mean_increments.size()) != n)
    throw std::invalid_argument("doob_increments: need one injected mean per time step");
  DoobIncrements out;
  // unit weights conserve mass exactly; skip the rounding of log(z / prev)
  const bool trivial = sys.env().beta == 0.0 && sys.truncation().exact();
  double prev = 1.0;
  forward_sweep(sys, {0, x}, n, nullptr, [&](std::int64_t k, const BoxField& averaged, const BoxField& rho) {
    const double z = rho.sum();
    out.raw.push_back(trivial ? 0.0 : std::log(z / prev));
    if (sys.env().beta == 0.0) {
      out.cond_mean.push_back(0.0);
      out.cond_stderr.push_back(0.0);
    } else {
      BoxField alpha = averaged;
      for (double& v : alpha.values) v /= prev;
      const auto est = conditional_log_mean(sys.env(), alpha, k + sys.origin_shift().t, inner_samples,
                                            mix64(inner_seed ^ mix64(static_cast<std::uint64_t>(k))));
      out.cond_mean.push_back(est.mean);
      out.cond_stderr.push_back(est.stderr_);
    }
    out.mg.push_back(out.raw.back() - out.cond_mean.back());
    const double injected = mean_increments.empty() ? 0.0 : mean_increments[static_cast<std::size_t>(k - 1)];
    out.prev.push_back(out.cond_mean.back() - injected);
    prev = z;
  });
  return out;
}

double phi(double u) {
  if (!(u > -1.0)) throw std::domain_error("phi: argument must exceed -1");
  // u - log1p(u) loses all digits for small u; use the series there
  if (std::abs(u) < 1e-4) return u * u * (0.5 - u * (1.0 / 3.0 - u * 0.25));
  return u - std::log1p(u);
}

AppendixDiag appendix_phi_diag(const std::vector<double>& a, const EnvSpec& eta_law, std::int64_t samples,
                               std::uint64_t seed) {
  if (a.empty()) throw std::invalid_argument("appendix_phi_diag: empty weight vector");
  CompensatedSum total, sq;
  for (double v : a) {
    if (!(v >= 0.0)) throw std::invalid_argument("appendix_phi_diag: weights must be nonnegative");
    total.add(v);
    sq.add(v * v);
  }
  if (std::abs(total.value() - 1.0) > 1e-12) throw std::invalid_argument("appendix_phi_diag: weights must sum to 1");
  if (samples < 2) throw std::invalid_argument("appendix_phi_diag: need at least two samples");
  AppendixDiag out;
  out.sum_a_sq = sq.value();
  out.gamma_app = eta_law.lambda;  // -E[beta omega - lambda] with centered omega
  out.samples = samples;
  Running phis, logs;
  const auto m = static_cast<std::int32_t>(a.size());
  for (std::int64_t s = 0; s < samples; ++s) {
    double u = 0.0;
    for (std::int32_t i = 0; i < m; ++i) {
      if (a[i] == 0.0) continue;
      u += a[i] * weight_and_noise(eta_law, EnvKey{seed, s + 1, Point(1, {i})}).e;
    }
    const double l = std::log1p(u);
    phis.add(std::abs(phi(u)));
    logs.add(l * l);
  }
  out.mean_abs_phi = phis.mean;
  out.stderr_abs_phi = phis.stderr_();
  out.mean_log_sq = logs.mean;
  out.stderr_log_sq = logs.stderr_();
  return out;
}

}  // namespace polylab
