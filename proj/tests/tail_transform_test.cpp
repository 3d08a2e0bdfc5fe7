// Reference values come from tests/oracles/special_values.py (mpmath, 50
// digits) and are frozen here.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "tailflow/autodiff.hpp"
#include "tailflow/errors.hpp"
#include "tailflow/flow_layers.hpp"
#include "tailflow/self_check.hpp"
#include "tailflow/special_fn.hpp"
#include "tailflow/tail_transform.hpp"
#include "test_util.hpp"

namespace tailflow {
namespace {

using testing::relative_error;

constexpr TailMode kModes[] = {TailMode::kGpdOnly, TailMode::kExtended};

double central(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

TEST(GpdQuantile, Examples) {
  EXPECT_EQ(gpd_quantile(0.0, 0.3), 0.0);
  EXPECT_EQ(gpd_quantile(0.0, -0.7), 0.0);
  EXPECT_NEAR(gpd_quantile(0.75, 0.5), 2.0, 1e-15);
  EXPECT_NEAR(gpd_quantile(0.5, 1e-9), std::log(2.0), 1e-9);
  EXPECT_THROW(gpd_quantile(1.0, 0.5), DomainError);
  EXPECT_THROW(gpd_quantile(-0.1, 0.5), DomainError);
  EXPECT_THROW(gpd_quantile(0.5, 0.0), DomainError);
}

TEST(GpdQuantile, IncreasingInU) {
  for (double lambda : {-0.5, 0.1, 0.5, 2.0}) {
    double previous = -1.0;
    for (int i = 0; i < 1000; ++i) {
      const double v = gpd_quantile(i / 1000.0, lambda);
      ASSERT_GT(v, previous);
      previous = v;
    }
  }
}

TEST(TwoTailed, ExamplesAndSymmetry) {
  EXPECT_EQ(two_tailed(0.0, 0.3, 0.6), 0.0);
  EXPECT_NEAR(two_tailed(-0.75, 0.9, 0.5), -2.0, 1e-15);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.999, 0.999);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(two_tailed(-v, 0.4, 0.4), -two_tailed(v, 0.4, 0.4));
  }
  EXPECT_THROW(two_tailed(1.0, 0.5, 0.5), DomainError);
  EXPECT_THROW(two_tailed(-1.0, 0.5, 0.5), DomainError);
}

TEST(TailForward, OriginMapsToLocation) {
  for (TailMode mode : kModes) {
    EXPECT_EQ(tail_forward_ext(0.0, {0.7, 2.0, 0.3, 0.4}, mode), 0.7);
  }
  EXPECT_EQ(tail_forward_ext(0.0, {-0.2, 1.5, -0.5, -0.8}, TailMode::kExtended), -0.2);
}

TEST(TailForward, MatchesHighPrecisionReference) {
  EXPECT_LT(relative_error(tail_forward(1.0, {0.0, 1.0, 0.5, 0.5}), 1.5504857062291503037), 1e-15);
  EXPECT_LT(relative_error(tail_forward(-2.0, {0.3, 1.7, 0.5, 0.25}), -7.6233092389457495375),
            1e-15);
  EXPECT_LT(relative_error(tail_forward(6.0, {0.0, 1.0, 1.0, 1.0}), 506797344.89712471247), 1e-14);
}

TEST(TailForward, AgreesWithQuantileComposition) {
  // u = 2F(z) - 1 pushed through the two-tailed quantile, where u is still
  // accurately representable.
  for (double z : {-2.5, -1.0, -0.2, 0.3, 1.0, 2.0}) {
    const TailParams p{0.0, 1.0, 0.45, 0.2};
    const double u = 2.0 * normal_cdf(z) - 1.0;
    EXPECT_LT(relative_error(tail_forward(z, p), two_tailed(u, 0.45, 0.2)), 1e-12) << z;
  }
}

TEST(TailForward, AntisymmetricForEqualIndices) {
  for (int i = 1; i < 400; ++i) {
    const double z = i / 50.0;
    const TailParams p{0.0, 1.3, 0.6, 0.6};
    EXPECT_EQ(tail_forward(-z, p), -tail_forward(z, p));
  }
}

TEST(TailForward, StrictlyIncreasing) {
  std::mt19937_64 rng(5);
  for (TailMode mode : kModes) {
    for (int draw = 0; draw < 10000; ++draw) {
      const TailParams p = random_tail_params(rng, mode);
      double previous = -std::numeric_limits<double>::infinity();
      for (int i = -16; i <= 16; ++i) {
        const double x = tail_forward_ext(i * 0.5, p, mode);
        ASSERT_GT(x, previous) << "draw " << draw;
        previous = x;
      }
    }
  }
}

TEST(TailForwardDz, OriginSlopeIndependentOfIndices) {
  for (double lp : {0.05, 0.5, 2.0}) {
    for (double lm : {0.1, 1.0}) {
      EXPECT_NEAR(tail_forward_dz(0.0, {0.0, 1.7, lp, lm}), 1.7 * kSqrt2OverPi, 1e-15);
    }
  }
  EXPECT_NEAR(tail_forward_ext_dz(0.0, {0.0, 1.7, -0.6, 0.4}, TailMode::kExtended),
              1.7 * kSqrt2OverPi, 1e-15);
}

TEST(TailForwardDz, MatchesFiniteDifferences) {
  const TailParams p{0.2, 1.4, 0.6, 0.3};
  for (double z : {-3.0, -1.0, 0.1, 1.0, 3.0}) {
    const double fd = central([&](double v) { return tail_forward(v, p); }, z, 1e-5);
    EXPECT_LT(relative_error(tail_forward_dz(z, p), fd), 1e-7) << z;
  }
}

TEST(TailForwardDz, LinearInSigma) {
  for (double z : {-2.0, 0.5, 4.0}) {
    EXPECT_LT(relative_error(tail_forward_dz(z, {0.0, 2.0, 0.3, 0.7}),
                             2.0 * tail_forward_dz(z, {0.0, 1.0, 0.3, 0.7})),
              1e-15);
  }
}

TEST(TailForward, SmoothAtOrigin) {
  std::mt19937_64 rng(9);
  for (TailMode mode : kModes) {
    for (int draw = 0; draw < 1000; ++draw) {
      const TailParams p = random_tail_params(rng, mode);
      const auto f = [&](double z) { return tail_forward_ext(z, p, mode); };
      const double expected = p.sigma * kSqrt2OverPi;
      // One-sided slopes, each Richardson-extrapolated (O(h^2) error).
      const double h = 1e-5;
      const double right = 2.0 * (f(h / 2) - f(0)) / (h / 2) - (f(h) - f(0)) / h;
      const double left = 2.0 * (f(0) - f(-h / 2)) / (h / 2) - (f(0) - f(-h)) / h;
      ASSERT_NEAR(origin_slope(f), expected, 1e-8);
      ASSERT_NEAR(right, left, 1e-8);
      ASSERT_NEAR(right, expected, 1e-8);
    }
  }
}

TEST(TailInverse, ExamplesFromTheForwardMap) {
  EXPECT_EQ(tail_inverse(0.7, {0.7, 2.0, 0.3, 0.4}), 0.0);
  EXPECT_LT(relative_error(tail_inverse(1.5505, {0.0, 1.0, 0.5, 0.5}), 1.0000052793347439004),
            1e-14);
  EXPECT_NEAR(tail_inverse_dx(0.7, {0.7, 2.0, 0.3, 0.4}), kSqrtPiOver2 / 2.0, 1e-15);
}

TEST(TailInverse, RoundTripsInBothModes) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> zdist(-8.0, 8.0);
  for (TailMode mode : kModes) {
    double worst_z = 0.0;
    double worst_x = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const TailParams p = random_tail_params(rng, mode);
      const double z = zdist(rng);
      const double x = tail_forward_ext(z, p, mode);
      worst_z = std::max(worst_z, std::abs(tail_inverse_ext(x, p, mode) - z));
      const double back = tail_forward_ext(tail_inverse_ext(x, p, mode), p, mode);
      worst_x = std::max(worst_x, relative_error(back, x, 1e-12));
    }
    EXPECT_LT(worst_z, 1e-8);
    EXPECT_LT(worst_x, 1e-6);
  }
}

TEST(TailInverseDx, ReciprocalOfForwardDerivative) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> zdist(-6.0, 6.0);
  for (TailMode mode : kModes) {
    for (int i = 0; i < 5000; ++i) {
      const TailParams p = random_tail_params(rng, mode);
      const double z = zdist(rng);
      const double x = tail_forward_ext(z, p, mode);
      ASSERT_LT(relative_error(tail_inverse_ext_dx(x, p, mode),
                               1.0 / tail_forward_ext_dz(tail_inverse_ext(x, p, mode), p, mode)),
                1e-8);
    }
  }
}

TEST(TailInverseDx, MatchesFiniteDifferences) {
  const TailParams p{0.1, 0.8, 0.4, 0.7};
  for (double z : {-3.0, -1.0, 0.2, 1.5, 3.0}) {
    const double x = tail_forward(z, p);
    const double h = 1e-6 * std::max(1.0, std::abs(x));
    const double fd = central([&](double v) { return tail_inverse(v, p); }, x, h);
    EXPECT_LT(relative_error(tail_inverse_dx(x, p), fd), 1e-7) << z;
  }
}

TEST(PowerTail, Examples) {
  EXPECT_EQ(power_tail(0.0, 1.7), 0.0);
  for (double z : {0.1, 1.0, 5.0}) EXPECT_NEAR(power_tail(z, 1.0), kSqrt2OverPi * z, 1e-15 * z);
  for (double xi : {1.0, 1.3, 2.0}) {
    const double h = 1e-7;
    EXPECT_NEAR(power_tail(h, xi) / h, kSqrt2OverPi, 1e-7);
    // Richardson on the one-sided difference removes the O(h) term.
    const double slope = 2.0 * power_tail(h / 2, xi) / (h / 2) - power_tail(h, xi) / h;
    EXPECT_NEAR(slope, kSqrt2OverPi, 1e-10);
  }
  EXPECT_THROW(power_tail(-0.1, 1.5), DomainError);
  EXPECT_THROW(power_tail(1.0, 0.0), DomainError);
}

TEST(TailForwardExt, PowerBranchAtMinusOneIsAffine) {
  const TailParams p{0.4, 1.6, -1.0, -1.0};
  for (double z : {-3.0, -0.5, 0.0, 2.0, 7.0}) {
    EXPECT_NEAR(tail_forward_ext(z, p, TailMode::kExtended), 0.4 + 1.6 * kSqrt2OverPi * z,
                1e-14 * (1.0 + std::abs(z)));
  }
}

TEST(TailValidation, RejectsInadmissibleIndices) {
  EXPECT_THROW(validate({0.0, 1.0, -0.5, 0.5}, TailMode::kGpdOnly), DomainError);
  EXPECT_THROW(validate({0.0, 1.0, 0.0, 0.5}, TailMode::kExtended), DomainError);
  EXPECT_THROW(validate({0.0, 1.0, -1.5, 0.5}, TailMode::kExtended), DomainError);
  EXPECT_THROW(validate({0.0, -1.0, 0.5, 0.5}, TailMode::kGpdOnly), DomainError);
  EXPECT_NO_THROW(validate({0.0, 1.0, -1.0, 0.5}, TailMode::kExtended));
}

TEST(TailLogDet, Examples) {
  const std::vector<double> zero{0.0};
  const std::vector<TailParams> one{{0.0, 2.5, 0.3, 0.3}};
  EXPECT_NEAR(tail_log_det(zero, one), std::log(2.5) + 0.5 * std::log(2.0 / kPi), 1e-15);

  std::mt19937_64 rng(21);
  std::vector<double> z{-2.0, -0.3, 0.0, 1.1, 3.5};
  std::vector<TailParams> params;
  double product = 1.0;
  for (double v : z) {
    params.push_back(random_tail_params(rng, TailMode::kGpdOnly));
    product *= tail_forward_dz(v, params.back());
  }
  EXPECT_NEAR(tail_log_det(z, params), std::log(product), 1e-10);

  auto scaled = params;
  for (auto& p : scaled) p.sigma *= 3.0;
  EXPECT_NEAR(tail_log_det(z, scaled) - tail_log_det(z, params), 5.0 * std::log(3.0), 1e-12);
}

TEST(TailLogDet, FiniteFarIntoTheTail) {
  const std::vector<TailParams> p{{0.0, 1.0, 0.5, 0.5}};
  for (double z : {30.0, 37.9, 38.0, 60.0, -1e3}) {
    const std::vector<double> v{z};
    EXPECT_TRUE(std::isfinite(tail_log_det(v, p))) << z;
  }
}

TEST(TailInverse, SaturatesBeyondTheCap) {
  const TailParams p{0.0, 1.0, 0.5, 0.5};
  // log x grows like lambda z^2 / 2, so x must grow by many orders of
  // magnitude to move z past the cap.
  const double huge = tail_forward(kTailZCap, p) * 1e50;
  EXPECT_NEAR(tail_inverse(huge, p), kTailZCap, 1e-9);
  EXPECT_TRUE(std::isfinite(tail_inverse_dx(huge, p)));
}

TEST(TailGradient, ParametersDifferentiateThroughTheInverse) {
  for (TailMode mode : kModes) {
    for (double x : {-12.0, -1.0, 0.3, 4.0, 50.0}) {
      const std::array<double, 4> raw{0.2, 0.1, mode == TailMode::kGpdOnly ? -0.7 : 1.4, 0.5};
      auto eval = [&](const std::array<double, 4>& r) {
        const BasicTailParams<double> p{r[0], decode_sigma(r[1]), decode_lambda(r[2], mode),
                                        decode_lambda(r[3], mode)};
        const auto [z, ld] = tail_inverse_with_log_dx<double>(x, p, mode);
        return z + ld;
      };
      ad::Tape tape;
      ad::ActiveTape guard(tape);
      std::array<ad::Var, 4> v;
      for (int k = 0; k < 4; ++k) v[k] = tape.variable(raw[k]);
      const BasicTailParams<ad::Var> p{v[0], decode_sigma(v[1]), decode_lambda(v[2], mode),
                                       decode_lambda(v[3], mode)};
      const auto [z, ld] = tail_inverse_with_log_dx<ad::Var>(ad::Var(x), p, mode);
      const auto g = tape.backward(z + ld);
      for (int k = 0; k < 4; ++k) {
        auto up = raw;
        auto down = raw;
        up[k] += 1e-6;
        down[k] -= 1e-6;
        const double fd = (eval(up) - eval(down)) / 2e-6;
        EXPECT_LT(relative_error(g[v[k]], fd, 1e-7), 1e-5) << "x " << x << " raw " << k;
      }
    }
  }
}

TEST(TailParameterization, DecodedValuesAreAdmissible) {
  for (double raw : {-50.0, -5.0, -1e-6, 0.0, 0.541324854612918, 3.0, 40.0}) {
    EXPECT_GT(decode_sigma(raw), 0.0);
    EXPECT_GT(decode_lambda(raw, TailMode::kGpdOnly), 0.0);
    const double l = decode_lambda(raw, TailMode::kExtended);
    EXPECT_GE(l, -1.0);
    EXPECT_GE(std::abs(l), kLambdaFloor);
  }
  for (double s : {1e-3, 0.5, 1.0, 7.0}) EXPECT_NEAR(decode_sigma(encode_sigma(s)), s, 1e-12);
  for (double l : {0.01, 0.1, 1.5}) {
    EXPECT_NEAR(decode_lambda(encode_lambda(l, TailMode::kGpdOnly), TailMode::kGpdOnly), l, 1e-12);
    EXPECT_NEAR(decode_lambda(encode_lambda(l, TailMode::kExtended), TailMode::kExtended), l,
                1e-12);
  }
  EXPECT_NEAR(decode_lambda(encode_lambda(-0.5, TailMode::kExtended), TailMode::kExtended), -0.5,
              1e-12);
}

}  // namespace
}  // namespace tailflow
