#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "polylab/lattice_point.hpp"
#include "polylab/philox.hpp"

namespace polylab {

enum class Family { Gaussian, Rademacher, Bernoulli, Uniform };

/// Environment law plus inverse temperature. All families are centered.
struct EnvSpec {
  Family family = Family::Gaussian;
  double beta = 0.0;
  double lambda = 0.0;  // log E[exp(beta * omega)], filled by make()
  double bernoulli_p = 0.5;
  double uniform_a = -1.0;
  double uniform_b = 1.0;

  /// Validates parameters and precomputes lambda.
  static EnvSpec make(Family family, double beta, double bernoulli_p = 0.5,
                      double uniform_a = -1.0, double uniform_b = 1.0);

  /// Every supported family satisfies the convex concentration property
  /// (Gaussian or bounded); the flag exists so tail experiments can insist on it.
  bool conc_ok() const { return true; }
};

struct EnvKey {
  std::uint64_t seed = 0;
  std::int64_t k = 1;
  Point x;
};

std::string family_name(Family f);
/// Throws std::invalid_argument for unknown names. "poisson" is rejected with
/// an explanation since it lacks the concentration property.
Family parse_family(std::string_view name);

/// Closed-form cumulant generating function log E[e^{beta omega}].
double lambda_cgf(const EnvSpec& spec, double beta);
double lambda_cgf(Family family, double beta);

/// Standard normal quantile (Wichura AS241, relative accuracy ~1e-16).
double normal_quantile(double p);

namespace detail {
/// AS241 branch for |p - 1/2| > 0.425.
double normal_quantile_tail(double p);
}  // namespace detail

/// Deterministic draw of omega_{k,x} for the given seed.
double sample_omega(const EnvSpec& spec, const EnvKey& key);

struct WeightNoise {
  double w;  // exp(beta*omega - lambda)
  double e;  // w - 1
};
WeightNoise weight_and_noise(const EnvSpec& spec, const EnvKey& key);

namespace detail {

/// Philox counter for site (k, x). Sites x and x + 2e_1 share one counter and
/// differ in the output lane, so a parity-restricted row costs one call per two
/// sites. For d = 4 the last two coordinates are packed into 16 bits each.
inline std::uint32_t site_group(std::int32_t x0) {
  return static_cast<std::uint32_t>((x0 >> 2) * 2 + (x0 & 1));
}
inline int site_lane(std::int32_t x0) { return (x0 >> 1) & 1; }

inline Philox4x32::Counter site_counter(std::int64_t k, const Point& x) {
  Philox4x32::Counter ctr{static_cast<std::uint32_t>(k), site_group(x.c[0]), 0, 0};
  if (x.dim <= 3) {
    for (int i = 1; i < x.dim; ++i) ctr[1 + i] = static_cast<std::uint32_t>(x.c[i]);
  } else {
    ctr[2] = static_cast<std::uint32_t>(x.c[1]);
    ctr[3] = (static_cast<std::uint32_t>(x.c[2]) & 0xFFFFu) |
             (static_cast<std::uint32_t>(x.c[3]) << 16);
  }
  return ctr;
}

inline std::uint64_t lane_bits(const Philox4x32::Counter& out, int lane) {
  const int off = 2 * lane;
  return (static_cast<std::uint64_t>(out[off]) << 32) | out[off + 1];
}

/// AS241 without argument checks; p must lie in (0, 1).
inline double normal_quantile_unchecked(double p) {
  const double q = p - 0.5;
  if (q <= 0.425 && q >= -0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  return normal_quantile_tail(p);
}

/// omega from a uniform in (0,1) by inverse CDF.
double omega_from_uniform(const EnvSpec& spec, double u);

}  // namespace detail

}  // namespace polylab
