#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "tailflow/errors.hpp"
#include "tailflow/eval_metrics.hpp"
#include "tailflow/special_fn.hpp"

namespace tailflow {
namespace {

std::vector<double> pareto(std::size_t n, double alpha, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) v = std::pow(1.0 - u(rng), -1.0 / alpha);
  return out;
}

TEST(Hill, RecoversParetoIndex) {
  const auto x = pareto(1000000, 2.0, 1);
  EXPECT_NEAR(hill_estimator(x, 10000), 0.5, 0.05);
}

// Exceedances of an exponential sample are exponential again, so the
// estimate concentrates at exp(u) E1(u) with u = log(n / k) and only decays
// like 1 / log(n / k); values from tests/oracles/hill_exponential.py.
TEST(Hill, LightTailMatchesExponentialLimit) {
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> x(1000000);
  for (double& v : x) v = e(rng);
  const double wide = hill_estimator(x, 10000);
  const double narrow = hill_estimator(x, 1000);
  EXPECT_NEAR(wide, 0.18297434996255157, 0.01);
  EXPECT_NEAR(narrow, 0.12815499334587105, 0.015);
  EXPECT_LT(narrow, wide);
}

TEST(Hill, LowerTailUsesNegatedSamples) {
  auto x = pareto(100000, 1.0, 3);
  const double upper = hill_estimator(x, 1000);
  for (double& v : x) v = -v;
  EXPECT_EQ(hill_estimator(x, 1000, Tail::kLower), upper);
}

TEST(Hill, ScaleAndPermutationInvariance) {
  auto x = pareto(100000, 1.5, 4);
  const double base = hill_estimator(x, 1000);
  auto scaled = x;
  for (double& v : scaled) v *= 7.0;
  EXPECT_NEAR(hill_estimator(scaled, 1000), base, 1e-12);
  std::shuffle(x.begin(), x.end(), std::mt19937_64(5));
  EXPECT_EQ(hill_estimator(x, 1000), base);
}

TEST(Hill, DomainChecks) {
  const auto x = pareto(1000, 1.0, 6);
  EXPECT_THROW(hill_estimator(x, 49), DomainError);
  EXPECT_THROW(hill_estimator(x, 1000), DomainError);
  std::vector<double> negative(1000, -1.0);
  EXPECT_THROW(hill_estimator(negative, 100), DomainError);
  EXPECT_EQ(default_hill_k(1000), 50u);
  EXPECT_EQ(default_hill_k(1000000), 10000u);
}

TEST(Moments, KnownValues) {
  const std::vector<double> x{1, 2, 3, 4};
  const auto m = sample_moments(x);
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_DOUBLE_EQ(m.variance, 5.0 / 3.0);
  EXPECT_NEAR(m.skewness, 0.0, 1e-15);
  EXPECT_NEAR(m.kurtosis, 1.64, 1e-12);
}

double normal_cdf_of(double x) { return 0.5 * erfc(-x / std::sqrt(2.0)); }

TEST(KolmogorovSmirnov, CorrectModelPassesAtNominalRate) {
  const std::size_t n = 2000;
  int below = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> x(n);
    for (double& v : x) v = normal(rng);
    below += ks_distance(x, normal_cdf_of) < 1.63 / std::sqrt(static_cast<double>(n));
  }
  EXPECT_GE(below, 38);
  EXPECT_NEAR(ks_critical_value(n), 1.6276 / std::sqrt(2000.0), 1e-4 / std::sqrt(2000.0));
}

TEST(KolmogorovSmirnov, EdgeCases) {
  const std::vector<double> one{0.0};
  EXPECT_DOUBLE_EQ(ks_distance(one, normal_cdf_of), 0.5);
  const std::vector<double> x{-1.0, 0.5, 2.0};
  EXPECT_DOUBLE_EQ(ks_distance(x, [](double) { return 0.0; }), 1.0);
  EXPECT_DOUBLE_EQ(ks_distance(x, [](double) { return 1.0; }), 1.0);
  const double d = ks_distance(x, normal_cdf_of);
  EXPECT_GE(d, 0.0);
  EXPECT_LE(d, 1.0);
}

TEST(TailDiagnostics, ReportsBothTailsPerColumn) {
  const auto p = pareto(20000, 2.0, 7);
  Matrix x(p.size(), 2);
  for (std::size_t r = 0; r < p.size(); ++r) {
    x(r, 0) = (r % 2 ? 1.0 : -1.0) * p[r];
    x(r, 1) = 1.0;  // constant: tails undefined
  }
  const auto d = tail_diagnostics(x);
  EXPECT_EQ(d.k, 200u);
  EXPECT_NEAR(d.hill_upper[0], 0.5, 0.15);
  EXPECT_NEAR(d.hill_lower[0], 0.5, 0.15);
  EXPECT_TRUE(std::isnan(d.hill_lower[1]));
}

}  // namespace
}  // namespace tailflow
