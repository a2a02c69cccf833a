#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <stdexcept>
#include <string>

namespace polylab {

inline constexpr int kMaxDim = 4;

/// Integer point of Z^d, 1 <= d <= kMaxDim. Unused trailing coordinates are 0.
struct Point {
  std::array<std::int32_t, kMaxDim> c{};
  int dim = 1;

  Point() = default;
  explicit Point(int d) : dim(d) {
    if (d < 1 || d > kMaxDim) throw std::domain_error("lattice dimension must be in [1, 4]");
  }
  Point(int d, std::initializer_list<std::int32_t> coords) : Point(d) {
    if (static_cast<int>(coords.size()) > d) throw std::domain_error("too many coordinates");
    int i = 0;
    for (auto v : coords) c[i++] = v;
  }

  static Point zero(int d) { return Point(d); }
  static Point unit(int d, int axis, int sign = 1) {
    Point p(d);
    p.c[axis] = sign;
    return p;
  }

  std::int32_t& operator[](int i) { return c[i]; }
  std::int32_t operator[](int i) const { return c[i]; }

  friend Point operator+(Point a, const Point& b) {
    for (int i = 0; i < a.dim; ++i) a.c[i] += b.c[i];
    return a;
  }
  friend Point operator-(Point a, const Point& b) {
    for (int i = 0; i < a.dim; ++i) a.c[i] -= b.c[i];
    return a;
  }
  friend Point operator-(Point a) {
    for (int i = 0; i < a.dim; ++i) a.c[i] = -a.c[i];
    return a;
  }
  friend bool operator==(const Point& a, const Point& b) { return a.dim == b.dim && a.c == b.c; }
  friend bool operator<(const Point& a, const Point& b) { return a.c < b.c; }

  std::int64_t l1() const {
    std::int64_t s = 0;
    for (int i = 0; i < dim; ++i) s += std::abs(static_cast<std::int64_t>(c[i]));
    return s;
  }
  std::int64_t linf() const {
    std::int64_t s = 0;
    for (int i = 0; i < dim; ++i) s = std::max<std::int64_t>(s, std::abs(static_cast<std::int64_t>(c[i])));
    return s;
  }
  double norm2_sq() const {
    double s = 0;
    for (int i = 0; i < dim; ++i) s += static_cast<double>(c[i]) * c[i];
    return s;
  }
  std::int64_t coord_sum() const {
    std::int64_t s = 0;
    for (int i = 0; i < dim; ++i) s += c[i];
    return s;
  }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < dim; ++i) {
      if (i) s += ",";
      s += std::to_string(c[i]);
    }
    return s + ")";
  }
};

/// (t, x) in N x Z^d.
struct SpaceTimePoint {
  std::int64_t t = 0;
  Point x;
};

}  // namespace polylab
