#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "polylab/lattice_point.hpp"

namespace polylab {

/// Raised when a computation would allocate more lattice cells than allowed.
class ResourceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Global cap on the number of cells in a single lattice slice.
std::int64_t cell_budget();
void set_cell_budget(std::int64_t cells);
void check_cell_budget(std::int64_t cells, const char* what);

/// Axis-aligned box of Z^d: lo[i] <= x[i] < lo[i] + ext[i].
struct Box {
  Point lo;
  std::array<std::int64_t, kMaxDim> ext{};

  Box() = default;
  Box(Point lower, std::array<std::int64_t, kMaxDim> extents) : lo(lower), ext(extents) {}

  /// Sup-norm ball of radius r around c.
  static Box centered(const Point& c, std::int64_t r);
  static Box single(const Point& c) { return centered(c, 0); }

  int dim() const { return lo.dim; }
  std::int64_t size() const {
    std::int64_t s = 1;
    for (int i = 0; i < dim(); ++i) s *= ext[i];
    return s;
  }
  bool empty() const { return size() == 0; }
  std::int64_t hi(int i) const { return lo[i] + ext[i] - 1; }
  bool contains(const Point& p) const {
    for (int i = 0; i < dim(); ++i)
      if (p[i] < lo[i] || p[i] > hi(i)) return false;
    return true;
  }
  Box expanded(std::int64_t r) const;
  Box intersect(const Box& o) const;
  std::int64_t stride(int axis) const {
    std::int64_t s = 1;
    for (int i = 0; i < axis; ++i) s *= ext[i];
    return s;
  }
  /// Offset of p inside the box (coordinate 0 varies fastest).
  std::int64_t offset(const Point& p) const {
    std::int64_t off = 0, s = 1;
    for (int i = 0; i < dim(); ++i) {
      off += (p[i] - lo[i]) * s;
      s *= ext[i];
    }
    return off;
  }
  Point point_at(std::int64_t off) const {
    Point p(dim());
    for (int i = 0; i < dim(); ++i) {
      p[i] = static_cast<std::int32_t>(lo[i] + off % ext[i]);
      off /= ext[i];
    }
    return p;
  }
  friend bool operator==(const Box& a, const Box& b) { return a.lo == b.lo && a.ext == b.ext; }
};

/// Dense real field over a box; reads outside the box return 0.
struct BoxField {
  Box box;
  std::vector<double> values;

  BoxField() = default;
  explicit BoxField(const Box& b, double fill = 0.0);

  int dim() const { return box.dim(); }
  double at(const Point& p) const { return box.contains(p) ? values[box.offset(p)] : 0.0; }
  double& ref(const Point& p) { return values.at(box.offset(p)); }
  double sum() const;
  double sum_squares() const;
  double max() const;

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(values.size()); ++i) fn(box.point_at(i), values[i]);
  }
};

/// Visits every row (fixed coordinates 1..d-1) of the box; fn(first point, offset).
template <class Fn>
void for_each_row(const Box& box, Fn&& fn) {
  if (box.empty()) return;
  const int d = box.dim();
  Point p = box.lo;
  std::int64_t off = 0;
  const std::int64_t rows = box.size() / box.ext[0];
  for (std::int64_t r = 0; r < rows; ++r) {
    fn(static_cast<const Point&>(p), off);
    off += box.ext[0];
    for (int i = 1; i < d; ++i) {
      if (++p[i] <= box.hi(i)) break;
      p[i] = box.lo[i];
    }
  }
}

/// out(y) = (2d)^{-1} sum_{z ~ y} in(z) for every y in out_box.
BoxField neighbor_average(const BoxField& in, const Box& out_box);

/// One averaging step on the box grown by one site in every direction.
inline BoxField neighbor_average(const BoxField& in) { return neighbor_average(in, in.box.expanded(1)); }

/// (a.t, a.x) <-> (b.t, b.x): the walk can travel from a to b.
bool parity_connected(const SpaceTimePoint& a, const SpaceTimePoint& b);

/// Exact p_n(x) = P(X_n = x) on the box [-n, n]^d.
BoxField heat_kernel(int d, std::int64_t n);

/// Bridge marginal p^{s,x;t,y}_k(z).
double bridge_prob(const SpaceTimePoint& from, const SpaceTimePoint& to, std::int64_t k, const Point& z);

/// p_n(0) from the multinomial sum, without building the kernel.
double return_probability(int d, std::int64_t n);

/// 2 (d/(2 pi n))^{d/2} exp(-d|x|^2/(2n)) on the parity-allowed support, 0 otherwise.
double lclt_approx(int d, std::int64_t n, const Point& x);

}  // namespace polylab
