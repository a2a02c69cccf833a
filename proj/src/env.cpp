#include "polylab/env.hpp"

#include <cmath>
#include <stdexcept>

namespace polylab {

namespace {

double log_cosh(double x) {
  x = std::abs(x);
  return x + std::log1p(std::exp(-2.0 * x)) - std::log(2.0);
}

// log(sinh(x)/x) for x >= 0
double log_sinhc(double x) {
  if (x < 1e-4) return x * x / 6.0;
  if (x < 20.0) return std::log(std::sinh(x) / x);
  return x - std::log(2.0 * x) + std::log1p(-std::exp(-2.0 * x));
}

}  // namespace

EnvSpec EnvSpec::make(Family family, double beta, double bernoulli_p, double uniform_a,
                      double uniform_b) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::domain_error("beta must be finite and >= 0");
  if (family == Family::Bernoulli && !(bernoulli_p > 0.0 && bernoulli_p < 1.0))
    throw std::domain_error("Bernoulli parameter must lie in (0,1)");
  if (family == Family::Uniform && !(uniform_a < uniform_b))
    throw std::domain_error("uniform environment needs a < b");
  EnvSpec s;
  s.family = family;
  s.beta = beta;
  s.bernoulli_p = bernoulli_p;
  s.uniform_a = uniform_a;
  s.uniform_b = uniform_b;
  s.lambda = lambda_cgf(s, beta);
  return s;
}

std::string family_name(Family f) {
  switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::Rademacher: return "rademacher";
    case Family::Bernoulli: return "bernoulli";
    case Family::Uniform: return "uniform";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  if (name == "gaussian" || name == "normal") return Family::Gaussian;
  if (name == "rademacher") return Family::Rademacher;
  if (name == "bernoulli") return Family::Bernoulli;
  if (name == "uniform") return Family::Uniform;
  if (name == "poisson")
    throw std::invalid_argument(
        "poisson environments are not supported: they have exponential moments but fail the "
        "convex concentration property, so the lower-tail bound is not expected to hold");
  throw std::invalid_argument("unknown environment family '" + std::string(name) + "'");
}

double lambda_cgf(const EnvSpec& spec, double beta) {
  if (!(beta >= 0.0)) throw std::domain_error("lambda_cgf: beta must be >= 0");
  switch (spec.family) {
    case Family::Gaussian: return 0.5 * beta * beta;
    case Family::Rademacher: return log_cosh(beta);
    case Family::Bernoulli: {
      const double p = spec.bernoulli_p;
      return std::log1p(p * std::expm1(beta)) - beta * p;
    }
    case Family::Uniform: {
      const double h = 0.5 * (spec.uniform_b - spec.uniform_a);
      return log_sinhc(beta * h);
    }
  }
  throw std::logic_error("unreachable family");
}

double lambda_cgf(Family family, double beta) {
  EnvSpec s;
  s.family = family;
  return lambda_cgf(s, beta);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0,1)");
  return detail::normal_quantile_unchecked(p);
}

namespace detail {

double normal_quantile_tail(double p) {
  const double q = p - 0.5;
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0 ? -val : val;
}


double omega_from_uniform(const EnvSpec& spec, double u) {
  switch (spec.family) {
    case Family::Gaussian: return normal_quantile(u);
    case Family::Rademacher: return u < 0.5 ? -1.0 : 1.0;
    case Family::Bernoulli: return (u < spec.bernoulli_p ? 1.0 : 0.0) - spec.bernoulli_p;
    case Family::Uniform: return (2.0 * u - 1.0) * 0.5 * (spec.uniform_b - spec.uniform_a);
  }
  throw std::logic_error("unreachable family");
}

}  // namespace detail

double sample_omega(const EnvSpec& spec, const EnvKey& key) {
  if (key.k < 1) throw std::domain_error("sample_omega: time index must be >= 1");
  if (key.k > 0xFFFFFFFFll) throw std::domain_error("sample_omega: time index exceeds 32 bits");
  if (key.x.dim == 4 && (std::abs(key.x.c[2]) >= (1 << 15) || std::abs(key.x.c[3]) >= (1 << 15)))
    throw std::domain_error("sample_omega: coordinate out of the packable range for d = 4");
  const auto out = Philox4x32::apply(detail::site_counter(key.k, key.x), Philox4x32::key_from_seed(key.seed));
  return detail::omega_from_uniform(spec, open_unit_interval(detail::lane_bits(out, detail::site_lane(key.x.c[0]))));
}

WeightNoise weight_and_noise(const EnvSpec& spec, const EnvKey& key) {
  const double omega = sample_omega(spec, key);
  const double w = std::exp(spec.beta * omega - spec.lambda);
  return {w, w - 1.0};
}

}  // namespace polylab
