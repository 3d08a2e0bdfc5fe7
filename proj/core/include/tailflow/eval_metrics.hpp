#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tailflow/matrix.hpp"

namespace tailflow {

enum class Tail { kUpper, kLower };

inline constexpr std::size_t kMinHillK = 50;

// Hill estimator of a positive tail index from the k largest observations
// (of -samples for the lower tail): mean of log(X_(i) / X_(k+1)), i = 1..k.
// Requires kMinHillK <= k < samples.size() and X_(k+1) > 0; otherwise
// throws DomainError.
double hill_estimator(std::span<const double> samples, std::size_t k, Tail tail = Tail::kUpper);

// 1% of the sample count, at least kMinHillK.
std::size_t default_hill_k(std::size_t sample_count);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double skewness = 0.0;
  double kurtosis = 0.0;  // not excess: 3 for a Gaussian
};

Moments sample_moments(std::span<const double> samples);

// sup over sample points of |F_n(x) - cdf(x)|; always within [0, 1].
double ks_distance(std::span<const double> samples, const std::function<double(double)>& cdf);

// Asymptotic Kolmogorov critical value sqrt(-log(alpha / 2) / 2) / sqrt(n).
double ks_critical_value(std::size_t n, double alpha = 0.01);

struct TailDiagnostics {
  std::size_t k = 0;
  double k_fraction = 0.0;
  // Per dimension; NaN when the estimator is undefined for that tail.
  std::vector<double> hill_upper;
  std::vector<double> hill_lower;
  std::vector<double> kurtosis;
};

// Both tails of every column of `x`, with k = default_hill_k(rows) unless
// `k` is nonzero.
TailDiagnostics tail_diagnostics(const Matrix& x, std::size_t k = 0);

}  // namespace tailflow
