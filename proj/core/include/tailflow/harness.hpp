#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tailflow/checkpoint.hpp"
#include "tailflow/data.hpp"
#include "tailflow/flow_model.hpp"
#include "tailflow/trainer.hpp"

namespace tailflow {

struct ExperimentConfig {
  std::vector<FlowVariant> variants = all_variants();
  // Number of leading columns to use; 0 keeps every column (or `tickers`).
  std::size_t dim = 0;
  std::filesystem::path data_path;
  std::vector<std::string> tickers;
  int repeats = 10;
  TrainConfig train{};
  ModelOptions model{};
  SplitFractions fractions{};
  std::optional<std::string> cutoff;
  // Repeat r uses seed + r for initialisation and shuffling.
  std::uint64_t seed = 0;
  // false: one split (seed) shared by all repeats; true: split seed + r.
  bool resample_split = false;
  bool standardize = true;
  int jobs = 1;
  std::filesystem::path output_dir = "tailflow-output";
  bool write_checkpoints = true;

  void validate() const;
};

struct RepeatResult {
  FlowVariant variant = FlowVariant::kRQS;
  int repeat = 0;
  std::uint64_t seed = 0;
  TrainReport report;
};

struct SummaryRow {
  FlowVariant variant = FlowVariant::kRQS;
  std::size_t dim = 0;
  int successes = 0;
  int failures = 0;
  double mean_test_nll = 0.0;
  // sample standard deviation / sqrt(successes); NaN below two successes.
  double std_error = 0.0;
  std::vector<double> test_nll;  // successful repeats, in repeat order
};

struct ResultTable {
  std::vector<SummaryRow> rows;  // in configured variant order
  std::vector<RepeatResult> repeats;

  int failure_count() const;
  const SummaryRow& row(FlowVariant variant) const;
};

// Mean and standard error over `values`, summed in order.
SummaryRow summarize(FlowVariant variant, std::size_t dim, const std::vector<double>& values,
                     int failures);

using ProgressCallback = std::function<void(const RepeatResult&)>;

// Reads config.data_path, splits, trains every (variant, repeat) pair and
// writes, under config.output_dir:
//   repeats.csv   one row per repeat (status, best epoch, test NLL, ...)
//   curves.csv    per-epoch train/validation NLL of every repeat
//   boxplot.csv   test NLL of successful repeats
//   summary.csv   machine-readable summary; summary.txt the same as a table
//   dataset.json  returns and split indices for an exact rerun
//   timing.csv    wall-clock per repeat (the only nondeterministic file)
//   checkpoints/<variant>_r<k>.json
ResultTable run_experiment(const ExperimentConfig& config, const ProgressCallback& progress = {});
// As above with the price table already in memory (data_path is ignored).
ResultTable run_experiment(const ExperimentConfig& config, const PriceTable& prices,
                           const ProgressCallback& progress = {});
// As above from a prepared dataset (dim/tickers/cutoff are ignored).
ResultTable run_experiment(const ExperimentConfig& config, const ReturnsDataset& dataset,
                           const ProgressCallback& progress = {});

// Writes `count` synthetic log-return rows (original units) with a header of
// the checkpoint's tickers.
Matrix generate(const Checkpoint& checkpoint, std::size_t count, std::uint64_t seed);
void write_samples(const std::filesystem::path& path, const Matrix& samples,
                   const std::vector<std::string>& tickers);

struct EvalReport {
  std::vector<double> nll;  // per return row, in the training space
  double mean_nll = 0.0;
  // log|det| of the standardisation; add to -nll for original-unit densities.
  double log_jacobian = 0.0;
};

// NLL of every log-return row of a price file under the checkpoint. Columns
// are matched by ticker name when present, else by position; throws
// DataError on a dimension mismatch.
EvalReport evaluate(const Checkpoint& checkpoint, const std::filesystem::path& prices_path);
EvalReport evaluate(const Checkpoint& checkpoint, const Matrix& returns);

// Shortest round-trip decimal form used in every emitted table.
std::string format_number(double v);

}  // namespace tailflow
