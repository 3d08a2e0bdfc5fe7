#include "tailflow/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tailflow {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("TrainConfig: epsilon must be > 0");
  if (clip_grad && !(clip_norm > 0.0)) {
    throw std::invalid_argument("TrainConfig: clip norm must be > 0");
  }
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[k] / correction1;
    const double v_hat = state.v[k] / correction2;
    params[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

double clip_by_global_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

NllGradient nll_with_gradient(const FlowModel& model, const Matrix& data,
                              std::span<const std::size_t> rows, ad::Tape& tape) {
  tape.clear();
  ad::ActiveTape guard(tape);
  const auto values = model.parameters().values();
  std::vector<ad::Var> theta;
  theta.reserve(values.size());
  for (double v : values) theta.push_back(tape.variable(v));

  std::vector<ad::Var> terms;
  terms.reserve(rows.size());
  for (std::size_t r : rows) {
    terms.push_back(model.log_prob<ad::Var>(theta, data.row(r)));
  }
  const ad::Var loss = -sum(std::span<const ad::Var>(terms));
  const ad::Gradient grad = tape.backward(loss);

  NllGradient out;
  out.sum = loss.value();
  out.count = rows.size();
  out.gradient.resize(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) out.gradient[k] = grad[theta[k]];
  return out;
}

double nll_sum(const FlowModel& model, std::span<const double> theta, const Matrix& data) {
  double total = 0.0;
  for (std::size_t r = 0; r < data.rows(); ++r) total -= model.log_prob<double>(theta, data.row(r));
  return total;
}

double mean_nll(const FlowModel& model, const Matrix& data) {
  if (data.rows() == 0) throw std::invalid_argument("mean_nll: empty data");
  return nll_sum(model, model.parameters().values(), data) / static_cast<double>(data.rows());
}

namespace {

double safe_mean_nll(const FlowModel& model, const Matrix& data) {
  try {
    const double v = mean_nll(model, data);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const EvaluationFault&) {
    return std::numeric_limits<double>::infinity();
  } catch (const DomainError&) {
    return std::numeric_limits<double>::infinity();
  }
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

TrainReport fit(FlowModel& model, const DataSplit& split, const TrainConfig& cfg,
                const EpochCallback& on_epoch) {
  cfg.validate();
  if (split.train.rows() == 0 || split.validation.rows() == 0) {
    throw std::invalid_argument("fit: train and validation sets must be nonempty");
  }
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  report.best_validation_nll = std::numeric_limits<double>::infinity();

  auto params = model.parameters().values();
  std::vector<double> best(params.begin(), params.end());
  AdamState adam(params.size());
  std::seed_seq shuffle_seed{static_cast<std::uint32_t>(cfg.seed),
                             static_cast<std::uint32_t>(cfg.seed >> 32), 0x5eedu, 0x5u};
  Rng shuffle_rng(shuffle_seed);
  std::vector<std::size_t> order(split.train.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  ad::Tape tape;
  int consecutive_bad = 0;

  for (int epoch = 0; epoch < cfg.epochs && !report.failed; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - begin);
      const std::span<const std::size_t> batch(order.data() + begin, count);
      NllGradient result;
      bool ok = true;
      try {
        result = nll_with_gradient(model, split.train, batch, tape);
        ok = std::isfinite(result.sum) && all_finite(result.gradient);
      } catch (const EvaluationFault&) {
        ok = false;
      } catch (const DomainError&) {
        ok = false;
      }
      if (!ok) {
        ++report.skipped_batches;
        if (++consecutive_bad > cfg.max_bad_batches) {
          report.failed = true;
          report.failure = "non-finite loss persisted for " + std::to_string(consecutive_bad) +
                           " batches in epoch " + std::to_string(epoch);
          break;
        }
        continue;
      }
      consecutive_bad = 0;
      if (cfg.clip_grad) {
        // Clip the per-observation mean gradient; the summed gradient is
        // rescaled back so Adam sees the summed objective.
        const double n = static_cast<double>(count);
        for (double& g : result.gradient) g /= n;
        clip_by_global_norm(result.gradient, cfg.clip_norm);
        for (double& g : result.gradient) g *= n;
      }
      adam_step(params, result.gradient, adam, cfg);
    }
    if (report.failed) break;

    EpochRecord record{epoch, safe_mean_nll(model, split.train),
                       safe_mean_nll(model, split.validation)};
    report.curve.push_back(record);
    if (record.validation_nll < report.best_validation_nll) {
      report.best_validation_nll = record.validation_nll;
      report.best_epoch = epoch;
      std::copy(params.begin(), params.end(), best.begin());
    }
    if (on_epoch) on_epoch(record);
  }

  if (!report.failed && report.best_epoch < 0) {
    report.failed = true;
    report.failure = "validation NLL was never finite";
  }
  std::copy(best.begin(), best.end(), params.begin());
  if (!report.failed) {
    report.test_nll = split.test.rows() > 0 ? safe_mean_nll(model, split.test)
                                            : std::numeric_limits<double>::quiet_NaN();
    if (split.test.rows() > 0 && !std::isfinite(report.test_nll)) {
      report.failed = true;
      report.failure = "test NLL is not finite";
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace tailflow
