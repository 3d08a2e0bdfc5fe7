#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "tailflow/data.hpp"
#include "tailflow/self_check.hpp"
#include "tailflow/trainer.hpp"
#include "test_util.hpp"

namespace tailflow {
namespace {

using testing::random_matrix;
using testing::relative_error;

std::vector<std::size_t> all_rows(const Matrix& x) {
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

TEST(Objective, SinglePointAtTheModeOfTheBase) {
  const FlowModel model(1, BaseKind::kStdNormal);
  const Matrix x(1, 1, 0.0);
  ad::Tape tape;
  const auto r = nll_with_gradient(model, x, all_rows(x), tape);
  EXPECT_NEAR(r.sum, 0.5 * std::log(2 * kPi), 1e-15);
  EXPECT_EQ(r.count, 1u);
}

TEST(Objective, DuplicatedBatchDoublesSumAndKeepsMean) {
  FlowModel model = FlowModel::build(FlowVariant::kEXF, 2, 1);
  randomize_parameters(model, 2);
  const Matrix x = random_matrix(8, 2, 3);
  std::vector<std::size_t> twice = all_rows(x);
  twice.insert(twice.end(), twice.begin(), twice.end());
  ad::Tape tape;
  const auto once = nll_with_gradient(model, x, all_rows(x), tape);
  const auto dup = nll_with_gradient(model, x, twice, tape);
  EXPECT_NEAR(dup.sum, 2 * once.sum, 1e-12 * std::abs(once.sum));
  EXPECT_NEAR(dup.mean(), once.mean(), 1e-12 * std::abs(once.mean()));
  for (std::size_t k = 0; k < once.gradient.size(); ++k) {
    EXPECT_NEAR(dup.gradient[k], 2 * once.gradient[k], 1e-10 * (1 + std::abs(once.gradient[k])));
  }
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  FlowModel model = FlowModel::build(FlowVariant::kTTF, 2, 4);
  randomize_parameters(model, 5);
  const Matrix x = random_matrix(8, 2, 6);
  ad::Tape tape;
  const auto r = nll_with_gradient(model, x, all_rows(x), tape);
  std::vector<double> theta(model.parameters().values().begin(),
                            model.parameters().values().end());
  EXPECT_NEAR(r.sum, nll_sum(model, theta, x), 1e-10 * std::abs(r.sum));
  double worst = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta[k]));
    auto up = theta;
    auto down = theta;
    up[k] += h;
    down[k] -= h;
    const double fd = (nll_sum(model, up, x) - nll_sum(model, down, x)) / (2 * h);
    worst = std::max(worst, relative_error(r.gradient[k], fd, 1e-6));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.0, 0.0};
  AdamState state(2);
  TrainConfig cfg;
  for (int i = 0; i < 5; ++i) adam_step(p, g, state, cfg);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, ConstantGradientStepsByLearningRate) {
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{3.0, -0.02};
  AdamState state(2);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  std::vector<double> before = p;
  for (int i = 0; i < 50; ++i) {
    before = p;
    adam_step(p, g, state, cfg);
  }
  EXPECT_NEAR(p[0] - before[0], -0.01, 1e-8);
  EXPECT_NEAR(p[1] - before[1], 0.01, 1e-6);
}

TEST(Adam, MatchesReferenceTrace) {
  // Values from tests/oracles/adam_trace.py.
  const std::vector<std::vector<double>> grads{{0.3, -2.0, 0.0}, {0.1, 1.0, 4.0},
                                               {-0.5, 0.25, 1e-3}};
  const std::vector<std::vector<double>> expected{
      {0.4900000003333333, -0.99000000005, 2},
      {0.48128936121571952, -0.98733662967024316, 1.9925586317906328},
      {0.48309310332981609, -0.98600103185260468, 1.9868048349488405}};
  std::vector<double> p{0.5, -1.0, 2.0};
  AdamState state(3);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  for (std::size_t t = 0; t < 3; ++t) {
    adam_step(p, grads[t], state, cfg);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], expected[t][i], 1e-15);
  }
  EXPECT_EQ(state.step, 3u);
}

TEST(Clipping, RescalesOnlyAboveTheThreshold) {
  std::vector<double> g{3.0, 4.0};
  EXPECT_DOUBLE_EQ(clip_by_global_norm(g, 10.0), 5.0);
  EXPECT_EQ(g, (std::vector<double>{3.0, 4.0}));
  EXPECT_DOUBLE_EQ(clip_by_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
}

DataSplit heavy_split(std::size_t dim, std::size_t rows, std::uint64_t seed) {
  SyntheticConfig sc;
  sc.dim = dim;
  sc.rows = rows;
  sc.nu = 3.0;
  sc.scale = 1.0;
  sc.seed = seed;
  const Matrix x = synthetic_student_t(sc);
  const auto ds = temporal_split(x, business_days("2001-01-01", rows), {}, seed);
  return ds.materialize();
}

TEST(Fit, ConfigValidation) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.learning_rate = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Fit, ZeroLearningRateLeavesParametersUnchanged) {
  FlowModel model = FlowModel::build(FlowVariant::kEXF, 2, 7);
  const std::vector<double> before(model.parameters().values().begin(),
                                   model.parameters().values().end());
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 0.0;
  const auto report = fit(model, heavy_split(2, 200, 8), cfg);
  EXPECT_FALSE(report.failed);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), model.parameters().values().begin()));
}

TEST(Fit, SingleEpochIsTheBestEpoch) {
  FlowModel model = FlowModel::build(FlowVariant::kRQS, 2, 9);
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto report = fit(model, heavy_split(2, 200, 10), cfg);
  EXPECT_EQ(report.best_epoch, 0);
  ASSERT_EQ(report.curve.size(), 1u);
  EXPECT_EQ(report.best_validation_nll, report.curve[0].validation_nll);
}

TEST(Fit, TrainingLossMostlyDecreases) {
  FlowModel model = FlowModel::build(FlowVariant::kEXF, 2, 11);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 64;
  cfg.seed = 12;
  const auto report = fit(model, heavy_split(2, 1000, 13), cfg);
  ASSERT_FALSE(report.failed) << report.failure;
  int decreases = 0;
  for (std::size_t e = 1; e < report.curve.size(); ++e) {
    decreases += report.curve[e].train_nll < report.curve[e - 1].train_nll;
  }
  EXPECT_GE(decreases, static_cast<int>(0.9 * (report.curve.size() - 1)));
  EXPECT_LT(report.curve.back().train_nll, report.curve.front().train_nll);
}

TEST(Fit, BestEpochRestoresItsParameters) {
  FlowModel model = FlowModel::build(FlowVariant::kTTF, 2, 14);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.learning_rate = 5e-2;  // large enough for validation NLL to bounce
  cfg.seed = 15;
  const DataSplit split = heavy_split(2, 400, 16);
  const auto report = fit(model, split, cfg);
  ASSERT_FALSE(report.failed) << report.failure;
  double best = report.curve[0].validation_nll;
  int best_epoch = 0;
  for (const auto& e : report.curve) {
    if (e.validation_nll < best) {
      best = e.validation_nll;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(report.best_epoch, best_epoch);
  EXPECT_EQ(report.best_validation_nll, best);
  EXPECT_EQ(mean_nll(model, split.validation), best);
  EXPECT_EQ(mean_nll(model, split.test), report.test_nll);
}

TEST(Fit, DeterministicForFixedSeeds) {
  const DataSplit split = heavy_split(2, 300, 17);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 18;
  FlowModel a = FlowModel::build(FlowVariant::kGTAF, 2, 19);
  FlowModel b = FlowModel::build(FlowVariant::kGTAF, 2, 19);
  const auto ra = fit(a, split, cfg);
  const auto rb = fit(b, split, cfg);
  EXPECT_EQ(ra.test_nll, rb.test_nll);
  EXPECT_TRUE(std::equal(a.parameters().values().begin(), a.parameters().values().end(),
                         b.parameters().values().begin()));
}

TEST(Fit, ClippingChangesTheTrajectoryOnlyWhenActive) {
  const DataSplit split = heavy_split(2, 300, 20);
  TrainConfig loose;
  loose.epochs = 2;
  loose.clip_norm = 1e12;
  TrainConfig off = loose;
  off.clip_grad = false;
  TrainConfig tight = loose;
  tight.clip_norm = 1e-3;
  FlowModel a = FlowModel::build(FlowVariant::kEXF, 2, 21);
  FlowModel b = FlowModel::build(FlowVariant::kEXF, 2, 21);
  FlowModel c = FlowModel::build(FlowVariant::kEXF, 2, 21);
  const auto ra = fit(a, split, loose);
  const auto rb = fit(b, split, off);
  const auto rc = fit(c, split, tight);
  EXPECT_EQ(ra.curve.back().train_nll, rb.curve.back().train_nll);
  EXPECT_NE(ra.curve.back().train_nll, rc.curve.back().train_nll);
}

TEST(Fit, NonFiniteDataFailsTheRun) {
  DataSplit split = heavy_split(1, 200, 22);
  for (double& v : split.train.data()) v = std::numeric_limits<double>::quiet_NaN();
  FlowModel model = FlowModel::build(FlowVariant::kEXF, 1, 23);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 1;
  const auto report = fit(model, split, cfg);
  EXPECT_TRUE(report.failed);
  EXPECT_FALSE(report.failure.empty());
}

TEST(Fit, CallbackSeesEveryEpoch) {
  FlowModel model = FlowModel::build(FlowVariant::kRQS, 1, 24);
  TrainConfig cfg;
  cfg.epochs = 4;
  std::vector<int> seen;
  fit(model, heavy_split(1, 100, 25), cfg, [&](const EpochRecord& e) { seen.push_back(e.epoch); });
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3}));
}

}  // namespace
}  // namespace tailflow
