#pragma once

// Flexible tail transformation R: R -> R and its extension to non-GPD tails.
//
//   R(z) = mu + sigma * (s / lambda_s) * [erfc(|z| / sqrt 2)^(-lambda_s) - 1],
//   s = sign(z).
//
// If z has Gaussian tails, R(z) has generalized-Pareto tails with index
// lambda_+ above and lambda_- below. In Extended mode a negative index
// lambda_s in [-1, 0) switches that side to the power map
//   mu + sigma * s * S(|z|; lambda_s + 2),  S(z; xi) = sqrt(2/pi) [(1 + z/xi)^xi - 1],
// which matches R's value and slope at z = 0.
//
// Everything is evaluated in log space: erfc(a)^(-lambda) becomes
// exp(-lambda * log_erfc(a)) and the inverse solves log_erfc(v) = w, so large
// |z| never round 1 - |u| to zero. |z| saturates at kTailZCap.

#include <cmath>
#include <span>
#include <utility>

#include "tailflow/autodiff.hpp"
#include "tailflow/errors.hpp"
#include "tailflow/special_fn.hpp"

namespace tailflow {

template <Scalar T>
struct BasicTailParams {
  T mu{0.0};
  T sigma{1.0};
  T lambda_plus{0.1};
  T lambda_minus{0.1};

  const T& lambda(bool upper) const { return upper ? lambda_plus : lambda_minus; }
};

using TailParams = BasicTailParams<double>;

enum class TailMode {
  kGpdOnly,   // lambda > 0 on both sides
  kExtended,  // lambda in [-1, 0) selects the power branch on that side
};

inline constexpr double kTailZCap = 38.0;
inline constexpr double kLambdaFloor = 1e-4;
inline constexpr double kSigmaFloor = 1e-4;

// GPD quantile (1/lambda)[(1 - u)^(-lambda) - 1] on u in [0, 1).
double gpd_quantile(double u, double lambda);

// Two-tailed GPD quantile on u in (-1, 1); both indices positive.
double two_tailed(double u, double lambda_plus, double lambda_minus);

// Power map S(z; xi) for z >= 0, xi > 0.
double power_tail(double z, double xi);

// Throws DomainError when `p` is not admissible in `mode`.
void validate(const TailParams& p, TailMode mode);

namespace detail {

// log(erfc(kTailZCap / sqrt 2)).
double log_erfc_cap();

inline double sign_of(double v) { return v >= 0.0 ? 1.0 : -1.0; }

inline bool is_power_branch(double lambda) { return lambda < 0.0; }

}  // namespace detail

// Forward map z -> x in either mode.
template <Scalar T>
T tail_forward_ext(const T& z, const BasicTailParams<T>& p, TailMode mode) {
  (void)mode;
  const double s = detail::sign_of(value_of(z));
  const T a = clamp(z * s, 0.0, kTailZCap);
  const T& lambda = p.lambda(s > 0.0);
  T magnitude;
  if (detail::is_power_branch(value_of(lambda))) {
    const T xi = lambda + 2.0;
    magnitude = kSqrt2OverPi * expm1(xi * log1p(a / xi));
  } else {
    magnitude = expm1(-lambda * log_erfc(a / kSqrt2)) / lambda;
  }
  return p.mu + p.sigma * s * magnitude;
}

// log dR/dz.
template <Scalar T>
T tail_log_dz_ext(const T& z, const BasicTailParams<T>& p, TailMode mode) {
  (void)mode;
  const double s = detail::sign_of(value_of(z));
  const T a = clamp(z * s, 0.0, kTailZCap);
  const T& lambda = p.lambda(s > 0.0);
  static const double kHalfLog2OverPi = 0.5 * std::log(2.0 / kPi);
  if (detail::is_power_branch(value_of(lambda))) {
    const T xi = lambda + 2.0;
    return log(p.sigma) + kHalfLog2OverPi + (xi - 1.0) * log1p(a / xi);
  }
  return log(p.sigma) + kHalfLog2OverPi - 0.5 * a * a - (lambda + 1.0) * log_erfc(a / kSqrt2);
}

// Inverse map x -> z together with log dz/dx.
template <Scalar T>
std::pair<T, T> tail_inverse_with_log_dx(const T& x, const BasicTailParams<T>& p, TailMode mode) {
  (void)mode;
  static const double kHalfLogPiOver2 = 0.5 * std::log(kPi / 2.0);
  static const double kHalfLog2OverPi = 0.5 * std::log(2.0 / kPi);
  const T r = (x - p.mu) / p.sigma;
  const double s = detail::sign_of(value_of(r));
  const T a = r * s;
  const T& lambda = p.lambda(s > 0.0);
  if (detail::is_power_branch(value_of(lambda))) {
    const T xi = lambda + 2.0;
    const T log_base = log1p(a / kSqrt2OverPi);
    const T z_abs = xi * expm1(log_base / xi);
    const T log_dx = -log(p.sigma) - kHalfLog2OverPi - (1.0 - 1.0 / xi) * log_base;
    return {s * z_abs, log_dx};
  }
  // y = lambda |x - mu| / sigma + 1 and w = log(y^(-1/lambda)) = log erfc(|z| / sqrt 2).
  const T log_y = log1p(lambda * a);
  if (value_of(log_y) < 0.0 || std::isnan(value_of(log_y))) {
    throw DomainError("tail_inverse: y <= 1 outside the admissible parameter range");
  }
  const T w = -log_y / lambda;
  const T v = inv_log_erfc(clamp(w, detail::log_erfc_cap(), 0.0));
  const T log_dx = -log(p.sigma) + kHalfLogPiOver2 + w - log_y + v * v;
  return {s * kSqrt2 * v, log_dx};
}

template <Scalar T>
T tail_inverse_ext(const T& x, const BasicTailParams<T>& p, TailMode mode) {
  return tail_inverse_with_log_dx(x, p, mode).first;
}

// Unconstrained parameterization used by the tail layers.
template <Scalar T>
T decode_sigma(const T& raw) {
  return softplus(raw) + kSigmaFloor;
}

template <Scalar T>
T decode_lambda(const T& raw, TailMode mode) {
  if (mode == TailMode::kGpdOnly) return softplus(raw) + kLambdaFloor;
  const T lambda = softplus(raw) - 1.0;
  const double v = value_of(lambda);
  // lambda = 0 separates the two branches and is not admissible.
  if (v >= 0.0 && v < kLambdaFloor) return T(kLambdaFloor);
  if (v < 0.0 && v > -kLambdaFloor) return T(-kLambdaFloor);
  return lambda;
}

double encode_sigma(double sigma);
double encode_lambda(double lambda, TailMode mode);

// GPD-only entry points (lambda_+, lambda_- > 0).
double tail_forward(double z, const TailParams& p);
double tail_forward_dz(double z, const TailParams& p);
double tail_inverse(double x, const TailParams& p);
double tail_inverse_dx(double x, const TailParams& p);

// Either mode.
double tail_forward_ext(double z, const TailParams& p, TailMode mode);
double tail_forward_ext_dz(double z, const TailParams& p, TailMode mode);
double tail_inverse_ext(double x, const TailParams& p, TailMode mode);
double tail_inverse_ext_dx(double x, const TailParams& p, TailMode mode);

// sum_i log dR/dz(z_i; p_i), evaluated in log space.
double tail_log_det(std::span<const double> z, std::span<const TailParams> params,
                    TailMode mode = TailMode::kGpdOnly);

}  // namespace tailflow
