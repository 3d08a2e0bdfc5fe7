#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tailflow/data.hpp"
#include "tailflow/flow_model.hpp"

namespace tailflow {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  // Maps raw log returns to the space the model was trained in.
  Standardizer standardizer;
  std::vector<std::string> tickers;
  int best_epoch = -1;
  double validation_nll = 0.0;
  double test_nll = 0.0;
};

struct Checkpoint {
  FlowModel model;
  CheckpointMeta meta;
};

// JSON document with "format" and "version" fields; parameter values are
// written with round-trip precision. Only models built by FlowModel::build
// can be saved.
void save_checkpoint(const std::filesystem::path& path, const FlowModel& model,
                     const CheckpointMeta& meta);
// Throws CheckpointError for a missing file, another format or version, or
// parameter blocks that do not match the rebuilt architecture.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tailflow
