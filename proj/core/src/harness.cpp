#include "tailflow/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "tailflow/errors.hpp"

namespace tailflow {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted += '"';
    quoted += c == '\n' ? ' ' : c;
  }
  return quoted + "\"";
}

std::string format_optional(double v) { return std::isnan(v) ? "NA" : format_number(v); }

ReturnsDataset select_dataset(const ExperimentConfig& config, const PriceTable& prices) {
  PriceTable table = prices;
  if (config.dim > 0) {
    if (config.dim > table.tickers.size()) {
      throw DataError("requested dimension " + std::to_string(config.dim) + " but the data has " +
                      std::to_string(table.tickers.size()) + " columns");
    }
    if (config.dim < table.tickers.size()) {
      Matrix narrowed(table.prices.rows(), config.dim);
      for (std::size_t r = 0; r < narrowed.rows(); ++r) {
        for (std::size_t c = 0; c < config.dim; ++c) narrowed(r, c) = table.prices(r, c);
      }
      table.prices = std::move(narrowed);
      table.tickers.resize(config.dim);
    }
  }
  return make_dataset(table, config.fractions, config.seed, config.cutoff);
}

void write_outputs(const ExperimentConfig& config, const ReturnsDataset& dataset,
                   const ResultTable& table) {
  const auto& dir = config.output_dir;
  save_dataset(dir / "dataset.json", dataset);

  auto repeats = open_output(dir / "repeats.csv");
  repeats << "variant,dim,repeat,seed,status,best_epoch,best_validation_nll,test_nll,"
             "skipped_batches,failure\n";
  auto curves = open_output(dir / "curves.csv");
  curves << "variant,repeat,epoch,train_nll,validation_nll\n";
  auto box = open_output(dir / "boxplot.csv");
  box << "variant,repeat,test_nll\n";
  auto timing = open_output(dir / "timing.csv");
  timing << "variant,repeat,wall_seconds\n";
  const std::size_t dim = dataset.x.cols();
  for (const auto& r : table.repeats) {
    const auto name = to_string(r.variant);
    const auto& rep = r.report;
    repeats << name << ',' << dim << ',' << r.repeat << ',' << r.seed << ','
            << (rep.failed ? "failed" : "ok") << ',' << rep.best_epoch << ','
            << format_optional(rep.failed && rep.best_epoch < 0
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : rep.best_validation_nll)
            << ',' << format_optional(rep.failed ? std::numeric_limits<double>::quiet_NaN()
                                                 : rep.test_nll)
            << ',' << rep.skipped_batches << ',' << csv_field(rep.failure) << '\n';
    for (const auto& e : rep.curve) {
      curves << name << ',' << r.repeat << ',' << e.epoch << ',' << format_number(e.train_nll)
             << ',' << format_number(e.validation_nll) << '\n';
    }
    if (!rep.failed) box << name << ',' << r.repeat << ',' << format_number(rep.test_nll) << '\n';
    timing << name << ',' << r.repeat << ',' << format_number(rep.wall_seconds) << '\n';
  }

  auto summary = open_output(dir / "summary.csv");
  summary << "variant,dim,repeats,successes,failures,mean_test_nll,std_error\n";
  for (const auto& row : table.rows) {
    summary << to_string(row.variant) << ',' << row.dim << ',' << row.successes + row.failures
            << ',' << row.successes << ',' << row.failures << ','
            << format_optional(row.mean_test_nll) << ',' << format_optional(row.std_error)
            << '\n';
  }

  auto text = open_output(dir / "summary.txt");
  text << "Test negative log-likelihood (mean over successful repeats, standard error)\n";
  text << "data rows: " << dataset.x.rows() << "  train: " << dataset.train.size()
       << "  validation: " << dataset.validation.size() << "  test: " << dataset.test.size()
       << "  cutoff: " << dataset.cutoff << "\n\n";
  text << std::left << std::setw(8) << "flow" << std::right << std::setw(6) << "d"
       << std::setw(14) << "mean NLL" << std::setw(12) << "std err" << std::setw(8) << "ok"
       << std::setw(8) << "failed" << '\n';
  for (const auto& row : table.rows) {
    std::ostringstream mean;
    std::ostringstream se;
    mean << std::fixed << std::setprecision(4) << row.mean_test_nll;
    if (std::isnan(row.std_error)) {
      se << "n/a";
    } else {
      se << std::fixed << std::setprecision(4) << row.std_error;
    }
    text << std::left << std::setw(8) << to_string(row.variant) << std::right << std::setw(6)
         << row.dim << std::setw(14) << (row.successes > 0 ? mean.str() : "n/a") << std::setw(12)
         << se.str() << std::setw(8) << row.successes << std::setw(8) << row.failures << '\n';
  }
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void ExperimentConfig::validate() const {
  if (variants.empty()) throw std::invalid_argument("experiment: no flow variants");
  if (repeats < 1) throw std::invalid_argument("experiment: repeats must be >= 1");
  if (jobs < 1) throw std::invalid_argument("experiment: jobs must be >= 1");
  train.validate();
}

int ResultTable::failure_count() const {
  int n = 0;
  for (const auto& row : rows) n += row.failures;
  return n;
}

const SummaryRow& ResultTable::row(FlowVariant variant) const {
  for (const auto& r : rows) {
    if (r.variant == variant) return r;
  }
  throw std::out_of_range("ResultTable: variant " + to_string(variant) + " not present");
}

SummaryRow summarize(FlowVariant variant, std::size_t dim, const std::vector<double>& values,
                     int failures) {
  SummaryRow row;
  row.variant = variant;
  row.dim = dim;
  row.failures = failures;
  row.successes = static_cast<int>(values.size());
  row.test_nll = values;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (values.empty()) {
    row.mean_test_nll = nan;
    row.std_error = nan;
    return row;
  }
  const double n = static_cast<double>(values.size());
  double total = 0.0;
  for (double v : values) total += v;
  row.mean_test_nll = total / n;
  if (values.size() < 2) {
    row.std_error = nan;
    return row;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - row.mean_test_nll) * (v - row.mean_test_nll);
  row.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return row;
}

ResultTable run_experiment(const ExperimentConfig& config, const ProgressCallback& progress) {
  return run_experiment(config, load_prices(config.data_path, config.tickers), progress);
}

ResultTable run_experiment(const ExperimentConfig& config, const PriceTable& prices,
                           const ProgressCallback& progress) {
  config.validate();
  return run_experiment(config, select_dataset(config, prices), progress);
}

ResultTable run_experiment(const ExperimentConfig& config, const ReturnsDataset& dataset,
                           const ProgressCallback& progress) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  if (config.write_checkpoints) std::filesystem::create_directories(config.output_dir / "checkpoints");

  struct Task {
    FlowVariant variant;
    int repeat;
  };
  std::vector<Task> tasks;
  for (FlowVariant v : config.variants) {
    for (int r = 0; r < config.repeats; ++r) tasks.push_back({v, r});
  }

  // Splits and standardisations depend only on the repeat index; building
  // them up front keeps workers share-nothing.
  std::vector<ReturnsDataset> splits;
  std::vector<DataSplit> data;
  std::vector<Standardizer> scalers;
  for (int r = 0; r < (config.resample_split ? config.repeats : 1); ++r) {
    splits.push_back(config.resample_split
                         ? resample_split(dataset, config.fractions,
                                          config.seed + static_cast<std::uint64_t>(r))
                         : dataset);
    DataSplit raw = splits.back().materialize();
    scalers.push_back(config.standardize ? Standardizer::fit(raw.train)
                                         : Standardizer::identity(dataset.x.cols()));
    data.push_back(standardize(raw, scalers.back()));
  }

  std::vector<RepeatResult> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const Task task = tasks[t];
      const std::size_t which = config.resample_split ? static_cast<std::size_t>(task.repeat) : 0;
      RepeatResult& out = results[t];
      out.variant = task.variant;
      out.repeat = task.repeat;
      out.seed = config.seed + static_cast<std::uint64_t>(task.repeat);
      try {
        FlowModel model = FlowModel::build(task.variant, dataset.x.cols(), out.seed, config.model);
        TrainConfig train = config.train;
        train.seed = out.seed;
        out.report = fit(model, data[which], train);
        if (config.write_checkpoints && out.report.best_epoch >= 0) {
          CheckpointMeta meta{scalers[which], dataset.tickers, out.report.best_epoch,
                              out.report.best_validation_nll, out.report.test_nll};
          save_checkpoint(config.output_dir / "checkpoints" /
                              (to_string(task.variant) + "_r" + std::to_string(task.repeat) +
                               ".json"),
                          model, meta);
        }
      } catch (const std::exception& e) {
        out.report.failed = true;
        out.report.failure = e.what();
      }
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(out);
      }
    }
  };
  const int jobs = std::min<int>(config.jobs, static_cast<int>(tasks.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  ResultTable table;
  table.repeats = std::move(results);
  for (FlowVariant v : config.variants) {
    std::vector<double> values;
    int failures = 0;
    for (const auto& r : table.repeats) {
      if (r.variant != v) continue;
      if (r.report.failed) {
        ++failures;
      } else {
        values.push_back(r.report.test_nll);
      }
    }
    table.rows.push_back(summarize(v, dataset.x.cols(), values, failures));
  }
  write_outputs(config, splits.front(), table);
  return table;
}

Matrix generate(const Checkpoint& checkpoint, std::size_t count, std::uint64_t seed) {
  if (count == 0) return Matrix(0, checkpoint.model.dim());
  return checkpoint.meta.standardizer.invert(checkpoint.model.sample(count, seed));
}

void write_samples(const std::filesystem::path& path, const Matrix& samples,
                   const std::vector<std::string>& tickers) {
  auto out = open_output(path);
  for (std::size_t c = 0; c < samples.cols(); ++c) {
    if (c > 0) out << ',';
    out << (c < tickers.size() ? tickers[c] : "x" + std::to_string(c + 1));
  }
  out << '\n';
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    for (std::size_t c = 0; c < samples.cols(); ++c) {
      if (c > 0) out << ',';
      out << format_number(samples(r, c));
    }
    out << '\n';
  }
}

EvalReport evaluate(const Checkpoint& checkpoint, const Matrix& returns) {
  const std::size_t d = checkpoint.model.dim();
  if (returns.cols() != d) {
    throw DataError("dimension mismatch: checkpoint has d = " + std::to_string(d) +
                    ", data has " + std::to_string(returns.cols()) + " columns");
  }
  if (returns.rows() == 0) throw DataError("no return rows to evaluate");
  const Matrix x = checkpoint.meta.standardizer.apply(returns);
  EvalReport report;
  report.log_jacobian = checkpoint.meta.standardizer.log_jacobian();
  const auto theta = checkpoint.model.parameters().values();
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double nll = std::numeric_limits<double>::infinity();
    try {
      nll = -checkpoint.model.log_prob<double>(theta, x.row(r));
    } catch (const EvaluationFault&) {
    }
    report.nll.push_back(nll);
    total += nll;
  }
  report.mean_nll = total / static_cast<double>(x.rows());
  return report;
}

EvalReport evaluate(const Checkpoint& checkpoint, const std::filesystem::path& prices_path) {
  const auto& tickers = checkpoint.meta.tickers;
  std::ifstream probe(prices_path);
  if (!probe) throw DataError("cannot open " + prices_path.string());
  std::string header;
  std::getline(probe, header);
  const bool by_name =
      !tickers.empty() && std::all_of(tickers.begin(), tickers.end(), [&](const auto& t) {
        return header.find(t) != std::string::npos;
      });
  const PriceTable table = by_name ? load_prices(prices_path, tickers) : load_prices(prices_path);
  return evaluate(checkpoint, log_returns(table));
}

}  // namespace tailflow
