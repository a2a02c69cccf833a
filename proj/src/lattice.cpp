#include "polylab/lattice.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

namespace polylab {

namespace {
std::atomic<std::int64_t> g_cell_budget{200'000'000};

// acc[x] += src[x + shift] over the overlap of [out_lo, out_lo+out_len) and the src row.
inline void add_shifted(double* acc, std::int64_t out_lo, std::int64_t out_len, const double* src,
                        std::int64_t src_lo, std::int64_t src_len, std::int64_t shift) {
  const std::int64_t a = std::max(out_lo, src_lo - shift);
  const std::int64_t b = std::min(out_lo + out_len, src_lo + src_len - shift);
  if (a >= b) return;
  double* dst = acc + (a - out_lo);
  const double* s = src + (a + shift - src_lo);
  const std::int64_t len = b - a;
  for (std::int64_t i = 0; i < len; ++i) dst[i] += s[i];
}
}  // namespace

std::int64_t cell_budget() { return g_cell_budget.load(); }
void set_cell_budget(std::int64_t cells) { g_cell_budget.store(cells); }
void check_cell_budget(std::int64_t cells, const char* what) {
  if (cells > cell_budget())
    throw ResourceError(std::string(what) + ": " + std::to_string(cells) + " cells exceed the budget of " +
                        std::to_string(cell_budget()));
}

Box Box::centered(const Point& c, std::int64_t r) {
  Box b;
  b.lo = c;
  for (int i = 0; i < c.dim; ++i) {
    b.lo[i] = static_cast<std::int32_t>(c[i] - r);
    b.ext[i] = 2 * r + 1;
  }
  return b;
}

Box Box::expanded(std::int64_t r) const {
  Box b = *this;
  for (int i = 0; i < dim(); ++i) {
    b.lo[i] = static_cast<std::int32_t>(lo[i] - r);
    b.ext[i] = ext[i] + 2 * r;
  }
  return b;
}

Box Box::intersect(const Box& o) const {
  Box b = *this;
  for (int i = 0; i < dim(); ++i) {
    const std::int64_t l = std::max<std::int64_t>(lo[i], o.lo[i]);
    const std::int64_t h = std::min(hi(i), o.hi(i));
    b.lo[i] = static_cast<std::int32_t>(l);
    b.ext[i] = std::max<std::int64_t>(0, h - l + 1);
  }
  return b;
}

BoxField::BoxField(const Box& b, double fill) : box(b) {
  check_cell_budget(b.size(), "BoxField");
  values.assign(static_cast<std::size_t>(b.size()), fill);
}

double BoxField::sum() const {
  // Neumaier summation; slices can hold millions of cells.
  double s = 0.0, c = 0.0;
  for (double v : values) {
    const double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  return s + c;
}

double BoxField::sum_squares() const {
  double s = 0.0, c = 0.0;
  for (double v0 : values) {
    const double v = v0 * v0;
    const double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  return s + c;
}

double BoxField::max() const {
  double m = values.empty() ? 0.0 : values.front();
  for (double v : values) m = std::max(m, v);
  return m;
}

BoxField neighbor_average(const BoxField& in, const Box& out_box) {
  const int d = in.dim();
  BoxField out(out_box);
  if (out_box.empty() || in.box.empty()) return out;
  const Box& ib = in.box;
  const std::int64_t in_len = ib.ext[0];
  const std::int64_t out_len = out_box.ext[0];
  const double scale = 1.0 / (2.0 * d);

  for_each_row(out_box, [&](const Point& row, std::int64_t off) {
    double* acc = out.values.data() + off;
    // axis-0 neighbors come from the row with identical transverse coordinates
    Point q = row;
    q[0] = ib.lo[0];
    bool same_row_inside = true;
    for (int i = 1; i < d; ++i)
      if (q[i] < ib.lo[i] || q[i] > ib.hi(i)) same_row_inside = false;
    if (same_row_inside) {
      const double* src = in.values.data() + ib.offset(q);
      add_shifted(acc, row[0], out_len, src, ib.lo[0], in_len, -1);
      add_shifted(acc, row[0], out_len, src, ib.lo[0], in_len, +1);
    }
    for (int j = 1; j < d; ++j) {
      for (int s : {-1, +1}) {
        Point r = q;
        r[j] += s;
        bool inside = true;
        for (int i = 1; i < d; ++i)
          if (r[i] < ib.lo[i] || r[i] > ib.hi(i)) inside = false;
        if (!inside) continue;
        add_shifted(acc, row[0], out_len, in.values.data() + ib.offset(r), ib.lo[0], in_len, 0);
      }
    }
    for (std::int64_t i = 0; i < out_len; ++i) acc[i] *= scale;
  });
  return out;
}

bool parity_connected(const SpaceTimePoint& a, const SpaceTimePoint& b) {
  if (a.t > b.t) throw std::domain_error("parity_connected: a.t must not exceed b.t");
  const std::int64_t dt = b.t - a.t;
  const Point dx = b.x - a.x;
  const std::int64_t l1 = dx.l1();
  return l1 <= dt && ((dt - l1) % 2 == 0);
}

BoxField heat_kernel(int d, std::int64_t n) {
  if (n < 0) throw std::domain_error("heat_kernel: n must be >= 0");
  const Point origin = Point::zero(d);
  double cells = std::pow(2.0 * static_cast<double>(n) + 1.0, d);
  if (cells > static_cast<double>(cell_budget()))
    throw ResourceError("heat_kernel: (2n+1)^d = " + std::to_string(cells) + " exceeds the cell budget");
  BoxField p(Box::single(origin), 1.0);
  for (std::int64_t k = 0; k < n; ++k) p = neighbor_average(p);
  return p;
}

double bridge_prob(const SpaceTimePoint& from, const SpaceTimePoint& to, std::int64_t k, const Point& z) {
  if (k < from.t || k > to.t) throw std::domain_error("bridge_prob: k must lie in [s, t]");
  if (!parity_connected(from, to)) throw std::domain_error("bridge_prob: endpoints are not parity connected");
  const int d = from.x.dim;
  const double total = heat_kernel(d, to.t - from.t).at(to.x - from.x);
  if (total == 0.0) throw std::domain_error("bridge_prob: bridge is undefined");
  const double first = heat_kernel(d, k - from.t).at(z - from.x);
  if (first == 0.0) return 0.0;
  const double second = heat_kernel(d, to.t - k).at(to.x - z);
  return first * second / total;
}

double lclt_approx(int d, std::int64_t n, const Point& x) {
  if (n < 1) throw std::domain_error("lclt_approx: n must be >= 1");
  if (!parity_connected({0, Point::zero(d)}, {n, x})) return 0.0;
  const double nn = static_cast<double>(n);
  return 2.0 * std::pow(d / (2.0 * std::numbers::pi * nn), 0.5 * d) * std::exp(-d * x.norm2_sq() / (2.0 * nn));
}

double return_probability(int d, std::int64_t n) {
  if (d < 1 || d > kMaxDim) throw std::domain_error("return_probability: unsupported dimension");
  if (n < 0) throw std::domain_error("return_probability: n must be >= 0");
  if (n % 2) return 0.0;
  const std::int64_t m = n / 2;
  // (2d)^{-2m} sum over m_1 + ... + m_d = m of (2m)! / prod (m_i!)^2
  const double base = std::lgamma(2.0 * m + 1.0) - 2.0 * m * std::log(2.0 * d);
  double total = 0.0;
  auto rec = [&](auto&& self, int axis, std::int64_t left, double acc) -> void {
    if (axis == d - 1) {
      total += std::exp(base - acc - 2.0 * std::lgamma(static_cast<double>(left) + 1.0));
      return;
    }
    for (std::int64_t k = 0; k <= left; ++k) {
      self(self, axis + 1, left - k, acc + 2.0 * std::lgamma(static_cast<double>(k) + 1.0));
    }
  };
  rec(rec, 0, m, 0.0);
  return total;
}

}  // namespace polylab
