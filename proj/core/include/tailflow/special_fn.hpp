#pragma once

// Scalar special functions used by the tail transform and the base densities.
// All functions are pure and thread-safe. Arguments outside the documented
// domain raise tailflow::DomainError.

namespace tailflow {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kSqrtPi = 1.77245385090551602730;
inline constexpr double kSqrt2OverPi = 0.79788456080286535588;  // sqrt(2/pi)
inline constexpr double kSqrtPiOver2 = 1.25331413731550025121;  // sqrt(pi/2)
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;   // log(sqrt(2 pi))

double erf(double z);

// Evaluated directly (never as 1 - erf) so the result keeps full relative
// precision in the upper tail; underflows to 0 only beyond z ~ 26.5.
double erfc(double z);

// Scaled complementary error function exp(z^2) erfc(z).
double erfcx(double z);

// log(erfc(z)), accurate for arbitrarily large positive z.
double log_erfc(double z);

// d/dz log(erfc(z)) = -2 / (sqrt(pi) erfcx(z)).
double log_erfc_derivative(double z);

// Solves log(erfc(v)) = w for v. Requires w < log(2).
double inv_log_erfc(double w);

// Standard normal CDF, F(z) = (1 + erf(z / sqrt 2)) / 2, evaluated as
// erfc(-z / sqrt 2) / 2 which is the same quantity without cancellation.
double normal_cdf(double z);

// Standard normal density.
double normal_pdf(double z);

// Inverse of normal_cdf on (0, 1). Wichura's AS 241 rational approximations.
double normal_quantile(double p);

// Inverse of erfc on (0, 2) via erfc^{-1}(x) = -F^{-1}(x / 2) / sqrt(2).
double erfc_inv(double x);

// log Gamma(x) and its derivative for x > 0.
double log_gamma(double x);
double digamma(double x);

// log(1 + exp(x)) without overflow.
double softplus(double x);

// Inverse of softplus on (0, inf).
double softplus_inverse(double y);

// Logistic sigmoid, the derivative of softplus.
double sigmoid(double x);

}  // namespace tailflow
