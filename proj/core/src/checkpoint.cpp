#include "tailflow/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "tailflow/errors.hpp"

namespace tailflow {

using nlohmann::json;

namespace {

// JSON has no NaN or infinity; non-finite metrics are stored as null.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& v) {
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FlowModel& model,
                     const CheckpointMeta& meta) {
  if (!model.variant()) throw CheckpointError("only built variants can be checkpointed");
  const ModelOptions& opt = model.options();
  json j;
  j["format"] = "tailflow-checkpoint";
  j["version"] = kCheckpointVersion;
  j["variant"] = to_string(*model.variant());
  j["dim"] = model.dim();
  j["init_seed"] = model.init_seed();
  j["options"] = {
      {"tail_affine", opt.tail_affine},
      {"lu_first", opt.lu_first},
      {"initial_nu", opt.initial_nu},
      {"tail_init",
       {opt.tail_init.mu, opt.tail_init.sigma, opt.tail_init.lambda_plus,
        opt.tail_init.lambda_minus}},
      {"spline",
       {{"bins", opt.spline.bins},
        {"bound", opt.spline.bound},
        {"min_bin_width", opt.spline.min_bin_width},
        {"min_bin_height", opt.spline.min_bin_height},
        {"min_derivative", opt.spline.min_derivative}}},
  };
  json blocks = json::array();
  for (const auto& block : model.parameters().blocks()) {
    const auto values = model.parameters().block_values(block.name);
    blocks.push_back({{"name", block.name},
                      {"values", std::vector<double>(values.begin(), values.end())}});
  }
  j["parameters"] = std::move(blocks);
  j["standardizer"] = {{"mean", meta.standardizer.mean}, {"scale", meta.standardizer.scale}};
  j["tickers"] = meta.tickers;
  j["best_epoch"] = meta.best_epoch;
  j["validation_nll"] = finite_or_null(meta.validation_nll);
  j["test_nll"] = finite_or_null(meta.test_nll);

  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": not valid JSON: " + e.what());
  }
  try {
    if (j.at("format") != "tailflow-checkpoint") {
      throw CheckpointError(path.string() + ": not a tailflow checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(path.string() + ": incompatible checkpoint version " +
                            std::to_string(version) + " (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    const json& o = j.at("options");
    ModelOptions opt;
    opt.tail_affine = o.at("tail_affine").get<bool>();
    opt.lu_first = o.at("lu_first").get<bool>();
    opt.initial_nu = o.at("initial_nu").get<double>();
    const auto tail = o.at("tail_init").get<std::vector<double>>();
    if (tail.size() != 4) throw CheckpointError(path.string() + ": malformed tail_init");
    opt.tail_init = {tail[0], tail[1], tail[2], tail[3]};
    const json& s = o.at("spline");
    opt.spline.bins = s.at("bins").get<std::size_t>();
    opt.spline.bound = s.at("bound").get<double>();
    opt.spline.min_bin_width = s.at("min_bin_width").get<double>();
    opt.spline.min_bin_height = s.at("min_bin_height").get<double>();
    opt.spline.min_derivative = s.at("min_derivative").get<double>();

    FlowModel model =
        FlowModel::build(parse_variant(j.at("variant").get<std::string>()),
                         j.at("dim").get<std::size_t>(), j.at("init_seed").get<std::uint64_t>(),
                         opt);
    const json& blocks = j.at("parameters");
    const auto& expected = model.parameters().blocks();
    if (blocks.size() != expected.size()) {
      throw CheckpointError(path.string() + ": parameter block count mismatch");
    }
    for (std::size_t b = 0; b < expected.size(); ++b) {
      const auto name = blocks[b].at("name").get<std::string>();
      const auto values = blocks[b].at("values").get<std::vector<double>>();
      if (name != expected[b].name || values.size() != expected[b].size) {
        throw CheckpointError(path.string() + ": parameter block '" + name +
                              "' does not match the architecture");
      }
      auto dst = model.parameters().block_values(name);
      std::copy(values.begin(), values.end(), dst.begin());
    }

    CheckpointMeta meta;
    meta.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    meta.standardizer.scale = j.at("standardizer").at("scale").get<std::vector<double>>();
    if (meta.standardizer.mean.size() != model.dim() ||
        meta.standardizer.scale.size() != model.dim()) {
      throw CheckpointError(path.string() + ": standardizer dimension mismatch");
    }
    meta.tickers = j.at("tickers").get<std::vector<std::string>>();
    meta.best_epoch = j.at("best_epoch").get<int>();
    meta.validation_nll = number_or_nan(j.at("validation_nll"));
    meta.test_nll = number_or_nan(j.at("test_nll"));
    return {std::move(model), std::move(meta)};
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": malformed checkpoint: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace tailflow
