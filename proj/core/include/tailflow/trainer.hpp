#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tailflow/autodiff.hpp"
#include "tailflow/flow_model.hpp"
#include "tailflow/matrix.hpp"

namespace tailflow {

struct TrainConfig {
  int epochs = 300;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;  // seeds the shuffling stream
  bool clip_grad = true;
  double clip_norm = 10.0;  // applies to the per-observation mean gradient
  // Consecutive non-finite batches tolerated before a run is declared failed.
  int max_bad_batches = 25;

  void validate() const;
};

struct AdamState {
  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

// Bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg);

// Rescales `grads` to Euclidean norm `max_norm` when larger; returns the
// norm before clipping.
double clip_by_global_norm(std::span<double> grads, double max_norm);

struct NllGradient {
  double sum = 0.0;  // -sum_i log q(x_i)
  std::size_t count = 0;
  std::vector<double> gradient;  // d sum / d theta

  double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
};

// Summed negative log-likelihood of rows `rows` of `data` and its gradient
// with respect to every model parameter. `tape` is cleared first.
NllGradient nll_with_gradient(const FlowModel& model, const Matrix& data,
                              std::span<const std::size_t> rows, ad::Tape& tape);

// Summed NLL at explicit parameter values (no gradient).
double nll_sum(const FlowModel& model, std::span<const double> theta, const Matrix& data);

// Per-observation mean NLL at the model's own parameters.
double mean_nll(const FlowModel& model, const Matrix& data);

struct DataSplit {
  Matrix train;
  Matrix validation;
  Matrix test;
};

struct EpochRecord {
  int epoch = 0;
  double train_nll = 0.0;
  double validation_nll = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> curve;
  int best_epoch = -1;
  double best_validation_nll = 0.0;
  double test_nll = 0.0;
  double wall_seconds = 0.0;
  std::size_t skipped_batches = 0;
  bool failed = false;
  std::string failure;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains for exactly cfg.epochs epochs, keeps the parameters with the lowest
// validation NLL, restores them and evaluates the test NLL. Non-finite
// losses mark the report failed instead of throwing.
TrainReport fit(FlowModel& model, const DataSplit& split, const TrainConfig& cfg,
                const EpochCallback& on_epoch = {});

}  // namespace tailflow
