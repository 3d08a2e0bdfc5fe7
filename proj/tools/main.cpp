// tailflow: fit, evaluate and sample heavy-tailed normalising flows for
// multivariate log returns.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "tailflow/checkpoint.hpp"
#include "tailflow/data.hpp"
#include "tailflow/harness.hpp"
#include "tailflow/self_check.hpp"

namespace {

using namespace tailflow;

std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv("TAILFLOW_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "tailflow-output";
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(',', start);
    const auto item = text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    if (!item.empty()) out.push_back(item);
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

struct TrainingFlags {
  std::string data;
  std::string flows;
  std::size_t dim = 0;
  std::string tickers;
  int epochs = 300;
  double lr = 1e-3;
  std::size_t batch_size = 256;
  int repeats = 10;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string output;
  bool resample_split = false;
  bool clip_grad = true;
  double clip_norm = 10.0;
  std::string cutoff;
  bool standardize = true;
  bool tail_affine = false;
  bool lu_first = false;
};

void add_training_flags(CLI::App* cmd, TrainingFlags& f, bool many_flows) {
  cmd->add_option("--data", f.data, "Closing-price file: date column plus one column per ticker")
      ->required()
      ->check(CLI::ExistingFile);
  if (many_flows) {
    cmd->add_option("--flow", f.flows,
                    "Comma-separated variants from rqs,gtaf,ttf,ttf_m,exf (default: all)");
  } else {
    cmd->add_option("--flow", f.flows, "Variant: rqs, gtaf, ttf, ttf_m or exf")->required();
  }
  cmd->add_option("--dim", f.dim, "Use the first D columns (default: all)");
  cmd->add_option("--tickers", f.tickers, "Comma-separated tickers to use, in order");
  cmd->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--repeats", f.repeats, "Independent repeats per variant")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Base seed; repeat r uses seed + r")->capture_default_str();
  cmd->add_option("--jobs", f.jobs, "Repeats trained concurrently")->capture_default_str();
  cmd->add_option("--output", f.output, "Output directory (default: $TAILFLOW_OUTPUT_DIR or ./tailflow-output)");
  cmd->add_flag("--resample-split", f.resample_split,
                "Draw a new train/validation partition for every repeat");
  cmd->add_flag("--clip-grad,!--no-clip-grad", f.clip_grad,
                "Clip the mean gradient to a global norm (default on)");
  cmd->add_option("--clip-norm", f.clip_norm, "Gradient clipping norm")->capture_default_str();
  cmd->add_option("--cutoff", f.cutoff,
                  "Last date of the train/validation period (default: 40% of rows after it)");
  cmd->add_flag("--standardize,!--no-standardize", f.standardize,
                "Standardise returns with training-set mean and deviation (default on)");
  cmd->add_flag("--tail-affine", f.tail_affine, "Add an affine layer to the tail variants");
  cmd->add_flag("--lu-first", f.lu_first, "Tail variants: put the LU layer next to the base");
}

ExperimentConfig make_config(const TrainingFlags& f) {
  ExperimentConfig cfg;
  cfg.data_path = f.data;
  cfg.variants.clear();
  for (const auto& name : split_list(f.flows)) cfg.variants.push_back(parse_variant(name));
  if (cfg.variants.empty()) cfg.variants = all_variants();
  cfg.dim = f.dim;
  cfg.tickers = split_list(f.tickers);
  cfg.repeats = f.repeats;
  cfg.train.epochs = f.epochs;
  cfg.train.learning_rate = f.lr;
  cfg.train.batch_size = f.batch_size;
  cfg.train.clip_grad = f.clip_grad;
  cfg.train.clip_norm = f.clip_norm;
  cfg.seed = f.seed;
  cfg.jobs = f.jobs;
  cfg.output_dir = f.output.empty() ? default_output_dir() : std::filesystem::path(f.output);
  cfg.resample_split = f.resample_split;
  if (!f.cutoff.empty()) cfg.cutoff = f.cutoff;
  cfg.standardize = f.standardize;
  cfg.model.tail_affine = f.tail_affine;
  cfg.model.lu_first = f.lu_first;
  return cfg;
}

int run_training(const ExperimentConfig& cfg) {
  const PriceTable prices = load_prices(cfg.data_path, cfg.tickers);
  if (prices.dropped_rows > 0) {
    std::cerr << "dropped " << prices.dropped_rows << " rows with missing prices\n";
  }
  const ResultTable table = run_experiment(cfg, prices, [](const RepeatResult& r) {
    std::cerr << to_string(r.variant) << " repeat " << r.repeat << ": ";
    if (r.report.failed) {
      std::cerr << "FAILED (" << r.report.failure << ")\n";
    } else {
      std::cerr << "test NLL " << r.report.test_nll << " (best epoch " << r.report.best_epoch
                << ")\n";
    }
  });
  std::ifstream summary(cfg.output_dir / "summary.txt");
  std::cout << summary.rdbuf();
  std::cout << "outputs written to " << cfg.output_dir.string() << '\n';
  if (table.failure_count() > 0) {
    std::cerr << table.failure_count() << " repeat(s) failed:\n";
    for (const auto& r : table.repeats) {
      if (r.report.failed) {
        std::cerr << "  " << to_string(r.variant) << " repeat " << r.repeat << ": "
                  << r.report.failure << '\n';
      }
    }
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heavy-tailed normalising flows for multivariate log returns", "tailflow"};
  app.require_subcommand(1);

  TrainingFlags fit_flags;
  fit_flags.repeats = 1;
  auto* fit_cmd = app.add_subcommand("fit", "Train one flow variant and save its checkpoint(s)");
  add_training_flags(fit_cmd, fit_flags, false);

  TrainingFlags exp_flags;
  auto* exp_cmd =
      app.add_subcommand("experiment", "Train variants with repeats and write summary tables");
  add_training_flags(exp_cmd, exp_flags, true);

  std::string eval_checkpoint;
  std::string eval_data;
  std::string eval_output;
  auto* eval_cmd = app.add_subcommand("eval", "Per-row and mean NLL of a price file");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data, "Closing-price file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--output", eval_output, "Write per-row NLL to this CSV file");

  std::string sample_checkpoint;
  std::size_t sample_count = 1000;
  std::uint64_t sample_seed = 0;
  std::string sample_output;
  auto* sample_cmd = app.add_subcommand("sample", "Generate synthetic log returns");
  sample_cmd->add_option("--checkpoint", sample_checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  sample_cmd->add_option("--count", sample_count, "Rows to generate")->capture_default_str();
  sample_cmd->add_option("--seed", sample_seed, "Sampling seed")->capture_default_str();
  sample_cmd->add_option("--output", sample_output, "Output CSV file")->required();

  std::uint64_t check_seed = 1;
  auto* check_cmd = app.add_subcommand("check", "Run the numerical verification suite");
  check_cmd->add_option("--seed", check_seed, "Seed for random draws")->capture_default_str();

  SyntheticConfig synth;
  std::string synth_output;
  auto* synth_cmd =
      app.add_subcommand("synth", "Write a synthetic correlated Student-T closing-price file");
  synth_cmd->add_option("--dim", synth.dim, "Number of tickers")->capture_default_str();
  synth_cmd->add_option("--rows", synth.rows, "Number of return rows")->capture_default_str();
  synth_cmd->add_option("--nu", synth.nu, "Degrees of freedom")->capture_default_str();
  synth_cmd->add_option("--rho", synth.rho, "Lag-one correlation between tickers")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--output", synth_output, "Output CSV file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit_cmd) return run_training(make_config(fit_flags));
    if (*exp_cmd) return run_training(make_config(exp_flags));
    if (*eval_cmd) {
      const Checkpoint ckpt = load_checkpoint(eval_checkpoint);
      const EvalReport report = evaluate(ckpt, std::filesystem::path(eval_data));
      if (!eval_output.empty()) {
        std::ofstream out(eval_output);
        out << "row,nll\n";
        for (std::size_t r = 0; r < report.nll.size(); ++r) {
          out << r << ',' << format_number(report.nll[r]) << '\n';
        }
      }
      std::cout << "rows: " << report.nll.size() << '\n'
                << "mean NLL: " << format_number(report.mean_nll) << '\n'
                << "mean NLL (original units): "
                << format_number(report.mean_nll - report.log_jacobian) << '\n';
      return 0;
    }
    if (*sample_cmd) {
      const Checkpoint ckpt = load_checkpoint(sample_checkpoint);
      write_samples(sample_output, generate(ckpt, sample_count, sample_seed), ckpt.meta.tickers);
      std::cout << "wrote " << sample_count << " rows to " << sample_output << '\n';
      return 0;
    }
    if (*check_cmd) {
      int failed = 0;
      for (const auto& r : run_self_checks(check_seed)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        failed += r.passed ? 0 : 1;
      }
      return failed == 0 ? 0 : 1;
    }
    if (*synth_cmd) {
      write_prices(synth_output, synthetic_prices(synth));
      std::cout << "wrote " << synth.rows + 1 << " price rows to " << synth_output << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
