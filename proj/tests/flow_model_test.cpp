#include <gtest/gtest.h>

#include <cmath>
#include <variant>
#include <vector>

#include "tailflow/eval_metrics.hpp"
#include "tailflow/flow_model.hpp"
#include "tailflow/self_check.hpp"
#include "test_util.hpp"

namespace tailflow {

// Readable parameter values in test names and failure messages.
void PrintTo(FlowVariant v, std::ostream* os) { *os << to_string(v); }

namespace {

using testing::random_matrix;
using testing::relative_error;

class VariantTest : public ::testing::TestWithParam<FlowVariant> {};

TEST(FlowModel, EmptyStackIsTheBase) {
  FlowModel model(2, BaseKind::kStdNormal);
  const std::vector<double> x{0.3, -1.2};
  EXPECT_DOUBLE_EQ(model.log_prob(x), -2 * kLogSqrt2Pi - 0.5 * (0.09 + 1.44));
}

TEST(FlowModel, SingleAffineIsChangeOfVariables) {
  FlowModel model(1, BaseKind::kStdNormal);
  model.add_affine();
  // d = 1: the affine head is bias-only; set shift b and scale a directly.
  const auto& blocks = model.parameters().blocks();
  ASSERT_FALSE(blocks.empty());
  const auto& layer = std::get<AffineLayer>(model.layers()[0]);
  const auto& out = layer.conditioner().output_layer();
  auto theta = model.parameters().values();
  const double b = 0.7;
  const double a = 2.5;
  out.set_bias(theta, 0, b);
  out.set_bias(theta, 1, encode_positive(a));
  const std::vector<double> x{1.9};
  const double z = (1.9 - b) / a;
  EXPECT_NEAR(model.log_prob(x), -kLogSqrt2Pi - 0.5 * z * z - std::log(a), 1e-12);
}

TEST(FlowModel, BuildContracts) {
  const auto exf = FlowModel::build(FlowVariant::kEXF, 3, 1);
  const auto* tail = std::get_if<TailLayer>(&exf.layers().back());
  ASSERT_NE(tail, nullptr);
  EXPECT_EQ(tail->mode(), TailMode::kGpdOnly);
  EXPECT_TRUE(tail->autoregressive());
  EXPECT_EQ(FlowModel::build(FlowVariant::kGTAF, 3, 1).base().kind(), BaseKind::kStudentT);
  EXPECT_EQ(FlowModel::build(FlowVariant::kRQS, 3, 1).base().kind(), BaseKind::kStdNormal);
  const auto ttfm = FlowModel::build(FlowVariant::kTTFMarginal, 3, 1);
  EXPECT_FALSE(std::get<TailLayer>(ttfm.layers().back()).autoregressive());
  EXPECT_EQ(std::get<TailLayer>(ttfm.layers().back()).mode(), TailMode::kExtended);
  EXPECT_GT(FlowModel::build(FlowVariant::kTTF, 10, 1).parameters().size(),
            FlowModel::build(FlowVariant::kTTFMarginal, 10, 1).parameters().size());

  std::vector<std::string> kinds;
  for (const auto& l : FlowModel::build(FlowVariant::kRQS, 2, 1).layers()) {
    kinds.push_back(layer_kind(l));
  }
  EXPECT_EQ(kinds, (std::vector<std::string>{"lu_linear", "rqs", "affine"}));
  kinds.clear();
  for (const auto& l : FlowModel::build(FlowVariant::kTTF, 2, 1).layers()) {
    kinds.push_back(layer_kind(l));
  }
  EXPECT_EQ(kinds, (std::vector<std::string>{"rqs", "lu_linear", "tail_autoregressive_extended"}));
}

TEST(FlowModel, VariantNames) {
  for (FlowVariant v : all_variants()) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_EQ(parse_variant("EXF"), FlowVariant::kEXF);
  EXPECT_EQ(parse_variant("TTF_m"), FlowVariant::kTTFMarginal);
  EXPECT_THROW(parse_variant("maf"), std::invalid_argument);
}

TEST(FlowModel, EvaluationFaultCarriesLayerIndex) {
  FlowModel model = FlowModel::build(FlowVariant::kRQS, 2, 3);
  const std::vector<double> x{std::numeric_limits<double>::infinity(), 0.0};
  try {
    model.log_prob(x);
    FAIL() << "expected an evaluation fault";
  } catch (const EvaluationFault& e) {
    EXPECT_GE(e.stage(), -1);
    EXPECT_LT(e.stage(), 3);
  }
}

TEST_P(VariantTest, GradientMatchesFiniteDifferences) {
  FlowModel model = FlowModel::build(GetParam(), 2, 5);
  randomize_parameters(model, 6);
  const GradientCheck check = check_log_prob_gradient(model, random_matrix(8, 2, 7));
  EXPECT_LT(check.max_relative_error, 1e-4) << "parameter " << check.worst_index;
  EXPECT_EQ(check.checked, model.parameters().size());
}

TEST_P(VariantTest, ForwardInverseAndLogDets) {
  FlowModel model = FlowModel::build(GetParam(), 4, 8);
  randomize_parameters(model, 9);
  const Matrix x = random_matrix(20, 4, 10, 1.5);
  std::vector<double> z(4), back(4);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double inv = model.inverse(x.row(r), z);
    const double fwd = model.forward(z, back);
    EXPECT_NEAR(inv, -fwd, 1e-9);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(back[c], x(r, c), 1e-8 * (1 + std::abs(x(r, c))));
  }
}

TEST_P(VariantTest, LogProbMatchesNumericalJacobianOfTheSampler) {
  FlowModel model = FlowModel::build(GetParam(), 2, 11);
  randomize_parameters(model, 12);
  const Matrix zs = random_matrix(10, 2, 13);
  for (std::size_t r = 0; r < zs.rows(); ++r) {
    std::vector<double> z(zs.row(r).begin(), zs.row(r).end());
    std::vector<double> x(2), up(2), down(2);
    model.forward(z, x);
    double jac[2][2];
    for (int j = 0; j < 2; ++j) {
      auto zp = z;
      auto zm = z;
      zp[j] += 1e-6;
      zm[j] -= 1e-6;
      model.forward(zp, up);
      model.forward(zm, down);
      for (int i = 0; i < 2; ++i) jac[i][j] = (up[i] - down[i]) / 2e-6;
    }
    const double log_det = std::log(std::abs(jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]));
    const double base_lp = model.base().log_prob<double>(model.parameters().values(), z);
    EXPECT_NEAR(model.log_prob(x), base_lp - log_det, 1e-5);
  }
}

TEST(FlowModel, IdentityInitialisedStackReproducesBaseSamples) {
  // Spline and affine layers start at the identity and the LU layer at the
  // reverse permutation, so samples are reversed base draws.
  for (FlowVariant v : {FlowVariant::kRQS, FlowVariant::kGTAF}) {
    FlowModel model = FlowModel::build(v, 3, 14);
    const Matrix x = model.sample(50, 15);
    const Matrix z = model.base().sample(model.parameters().values(), 50, 15);
    for (std::size_t r = 0; r < 50; ++r) {
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(x(r, c), z(r, 2 - c), 1e-12);
    }
  }
}

TEST_P(VariantTest, SamplingIsSeedDeterministic) {
  FlowModel model = FlowModel::build(GetParam(), 3, 16);
  randomize_parameters(model, 17);
  EXPECT_EQ(model.sample(200, 3), model.sample(200, 3));
}

TEST_P(VariantTest, BatchEqualsRowAtATime) {
  FlowModel model = FlowModel::build(GetParam(), 3, 18);
  randomize_parameters(model, 19);
  const Matrix x = random_matrix(30, 3, 20);
  const auto batch = model.log_prob(x);
  for (std::size_t r = 0; r < x.rows(); ++r) EXPECT_EQ(batch[r], model.log_prob(x.row(r)));
}

TEST_P(VariantTest, SamplesAgreeWithOwnDensity) {
  // Average log q over model samples estimates -H; its standard error comes
  // from the same samples. Evaluating the density of the samples through the
  // inverse chain must agree with the log-det of the sampling direction.
  FlowModel model = FlowModel::build(GetParam(), 2, 21);
  randomize_parameters(model, 22, 0.2);
  const std::size_t n = 10000;
  std::mt19937_64 rng(23);
  const auto theta = model.parameters().values();
  std::vector<double> z(2), x(2);
  double via_inverse = 0.0;
  double via_forward = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    model.base().sample(theta, rng, z);
    const double fwd = model.forward(z, x);
    const double lp_forward = model.base().log_prob<double>(theta, z) - fwd;
    const double lp = model.log_prob(x);
    via_inverse += lp;
    via_forward += lp_forward;
    sq += lp * lp;
  }
  const double mean = via_inverse / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_NEAR(mean, via_forward / n, 3 * se);
  EXPECT_NEAR(mean, via_forward / n, 1e-8 * std::abs(mean) + 1e-9);
}

TEST_P(VariantTest, OneDimensionalCdfMatchesSamples) {
  FlowModel model = FlowModel::build(GetParam(), 1, 24);
  randomize_parameters(model, 25);
  const Matrix s = model.sample(10000, 26);
  const double d = ks_distance(s.column(0), [&](double v) { return model.cdf(v); });
  EXPECT_LT(d, ks_critical_value(10000));
}

TEST(FlowModel, ExtraIdentityLayerLeavesDensityUnchanged) {
  FlowModel plain(3, BaseKind::kStdNormal, 27);
  plain.add_rqs();
  plain.add_tail(TailMode::kGpdOnly, true, {0.0, 1.0, 0.3, 0.3});
  FlowModel extra(3, BaseKind::kStdNormal, 27);
  extra.add_rqs();
  extra.add_tail(TailMode::kGpdOnly, true, {0.0, 1.0, 0.3, 0.3});
  extra.add_affine();
  const Matrix x = random_matrix(10, 3, 28);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    EXPECT_NEAR(plain.log_prob(x.row(r)), extra.log_prob(x.row(r)), 1e-10);
  }
}

TEST(FlowModel, ExfMeanFollowsTheLocation) {
  // With sigma tiny and mu forced to m, samples concentrate at m.
  FlowModel model(1, BaseKind::kStdNormal, 29);
  model.add_tail(TailMode::kGpdOnly, true, {0.8, 0.05, 0.1, 0.1});
  const Matrix s = model.sample(100000, 30);
  const auto m = sample_moments(s.column(0));
  EXPECT_NEAR(m.mean, 0.8, 4 * std::sqrt(m.variance / 1e5));
}

INSTANTIATE_TEST_SUITE_P(AllVariants, VariantTest, ::testing::ValuesIn(all_variants()),
                         [](const auto& info) { return to_string(info.param); });

}  // namespace
}  // namespace tailflow
