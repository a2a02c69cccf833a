#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polylab/polymer.hpp"

namespace polylab {

/// Compactly supported test function f on R^d, f = 0 outside [-L, L]^d.
struct TestFunction {
  enum class Kind { IndicatorBox, SmoothBump, TensorHat };
  Kind kind = Kind::SmoothBump;
  double support = 1.0;  // L

  double operator()(const double* x, int d) const;
  /// Lattice samples f(x / sqrt(n)) on the smallest box holding the support.
  BoxField on_lattice(int d, std::int64_t n) const;
  std::string name() const;
  static Kind parse_kind(const std::string& s);
};

/// delta in (0, 1/6) and cut = floor(n^{1 - delta}).
struct WindowParams {
  double delta = 0.1;
  std::int64_t n = 0;
  std::int64_t cut = 0;
  static WindowParams make(std::int64_t n, double delta);
};

struct FluctuationSample {
  double S = 0.0;  // S_n(f)
  double K = 0.0;  // K_n(f)
  double M_delta = 0.0;
  double s_delta = 0.0;
  double S_delta = 0.0;
  double k_delta = 0.0;
  BoxField K_delta;  // K_n^delta(x) on the support box
  double logZ_mean_used = 0.0;
};

struct FluctPair {
  double S = 0.0;
  double K = 0.0;
};

/// S_n(f) and K_n(f) from one all-starts sweep; logZ_mean estimates E[log Z_n].
FluctPair fluct_fields(const PolymerSystem& sys, std::int64_t n, const TestFunction& f, double logZ_mean);
/// Same, from an already computed field {Z_n^x}.
FluctPair fluct_from_field(const BoxField& z, const BoxField& f_lattice, std::int64_t n, double logZ_mean);

struct WindowTerms {
  double s_delta = 0.0;
  double S_delta = 0.0;
  double k_delta = 0.0;
  BoxField K_delta;
};
WindowTerms window_decomposition(const PolymerSystem& sys, std::int64_t n, const TestFunction& f, double delta,
                                 double logZ_cut_mean, double ratio_mean);
/// Same, from the fields {Z_n^x} and {Z_cut^x} on the grid of f_lattice.
WindowTerms window_from_fields(const BoxField& zn, const BoxField& zc, const BoxField& f_lattice, std::int64_t n,
                               double logZ_cut_mean, double ratio_mean);

/// M_n^delta(f) = n^{-d/2} sum_x f(x/sqrt n) M_n^delta(x). The y-sum at time k runs over
/// sites within radius_scale * sqrt(k) log k (+2) of the support of f.
double martingale_approx(const PolymerSystem& sys, std::int64_t n, double delta, const TestFunction& f,
                         double radius_scale = 1.0);
/// M_n^delta(x) for a single starting point.
double martingale_approx_at(const PolymerSystem& sys, std::int64_t n, double delta, const Point& x,
                            double radius_scale = 1.0);

/// Khat_n(x) = sum_{k<=n} sum_y alpha_k(x,y) E_{k,y}, same truncation rule.
double khat(const PolymerSystem& sys, std::int64_t n, const Point& x, double radius_scale = 1.0);

struct DoobIncrements {
  std::vector<double> raw;          // log(Z_k^x / Z_{k-1}^x)
  std::vector<double> cond_mean;    // inner-MC estimate of E[raw_k | F_{k-1}]
  std::vector<double> cond_stderr;  // its standard error
  std::vector<double> mg;           // raw - cond_mean
  std::vector<double> prev;         // cond_mean - injected mean increment
};
/// Inner Monte Carlo resamples slice k only, alpha_k(x, .) fixed. mean_increments
/// (size n, may be empty = zeros) estimates E[log(Z_k / Z_{k-1})].
DoobIncrements doob_increments(const PolymerSystem& sys, std::int64_t n, const Point& x, int inner_samples,
                               std::uint64_t inner_seed, const std::vector<double>& mean_increments = {});

/// Inner estimate of E[log(1 + sum_y a_y E'_y)] with fresh i.i.d. E'.
struct InnerEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};
InnerEstimate conditional_log_mean(const EnvSpec& env, const BoxField& alpha, std::int64_t k, int samples,
                                   std::uint64_t seed);

struct AppendixDiag {
  double mean_abs_phi = 0.0;      // E|phi(U)|
  double mean_log_sq = 0.0;       // E[(log(1+U))^2]
  double sum_a_sq = 0.0;          // sum a_i^2
  double stderr_abs_phi = 0.0;
  double stderr_log_sq = 0.0;
  double gamma_app = 0.0;         // -E[log eta], exact for the law
  std::int64_t samples = 0;
};
/// phi(u) = u - log(1+u)
double phi(double u);
/// U = sum_i a_i (eta_i - 1) with eta = exp(beta omega - lambda) from eta_law.
AppendixDiag appendix_phi_diag(const std::vector<double>& a, const EnvSpec& eta_law, std::int64_t samples,
                               std::uint64_t seed);

}  // namespace polylab
