#include "tailflow/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "tailflow/errors.hpp"

namespace tailflow {

double hill_estimator(std::span<const double> samples, std::size_t k, Tail tail) {
  if (k < kMinHillK) {
    throw DomainError("hill_estimator: k = " + std::to_string(k) + " is below the minimum of " +
                      std::to_string(kMinHillK));
  }
  if (k >= samples.size()) {
    throw DomainError("hill_estimator: k = " + std::to_string(k) + " needs more than " +
                      std::to_string(samples.size()) + " samples");
  }
  std::vector<double> x(samples.begin(), samples.end());
  if (tail == Tail::kLower) {
    for (double& v : x) v = -v;
  }
  // Order statistics X_(1) >= ... >= X_(k+1) end up in x[0..k].
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k), x.end(),
                   std::greater<>());
  const double threshold = x[k];
  if (!(threshold > 0.0)) {
    throw DomainError("hill_estimator: the (k+1)-th largest " +
                      std::string(tail == Tail::kUpper ? "" : "negated ") +
                      "observation is " + std::to_string(threshold) +
                      "; the estimator needs a positive threshold (shift the data or lower k)");
  }
  // Sorting the top k makes the sum order, and so the result, independent
  // of the input order.
  std::sort(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k));
  const double log_threshold = std::log(threshold);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += std::log(x[i]) - log_threshold;
  return total / static_cast<double>(k);
}

std::size_t default_hill_k(std::size_t sample_count) {
  return std::max(kMinHillK, sample_count / 100);
}

Moments sample_moments(std::span<const double> samples) {
  const double n = static_cast<double>(samples.size());
  if (samples.size() < 2) throw DomainError("sample_moments: need at least 2 samples");
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  for (double v : samples) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  Moments out;
  out.mean = mean;
  out.variance = m2 * n / (n - 1.0);
  out.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  out.kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;
  return out;
}

double ks_distance(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw DomainError("ks_distance: no samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = std::clamp(cdf(x[i]), 0.0, 1.0);
    const double above = static_cast<double>(i + 1) / n - f;
    const double below = f - static_cast<double>(i) / n;
    worst = std::max({worst, above, below});
  }
  return std::min(worst, 1.0);
}

double ks_critical_value(std::size_t n, double alpha) {
  if (n == 0 || !(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("ks_critical_value: need n > 0 and 0 < alpha < 1");
  }
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

TailDiagnostics tail_diagnostics(const Matrix& x, std::size_t k) {
  TailDiagnostics out;
  out.k = k == 0 ? default_hill_k(x.rows()) : k;
  out.k_fraction = x.rows() == 0 ? 0.0 : static_cast<double>(out.k) / static_cast<double>(x.rows());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const std::vector<double> column = x.column(c);
    auto safe_hill = [&](Tail tail) {
      try {
        return hill_estimator(column, out.k, tail);
      } catch (const DomainError&) {
        return nan;
      }
    };
    out.hill_upper.push_back(safe_hill(Tail::kUpper));
    out.hill_lower.push_back(safe_hill(Tail::kLower));
    out.kurtosis.push_back(column.size() >= 2 ? sample_moments(column).kurtosis : nan);
  }
  return out;
}

}  // namespace tailflow
