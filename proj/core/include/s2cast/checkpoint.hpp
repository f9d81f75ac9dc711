#pragma once

#include <cstddef>
#include <string>

#include "s2cast/dataset.hpp"
#include "s2cast/model.hpp"
#include "s2cast/train.hpp"

namespace s2cast {

struct CheckpointInfo {
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
};

struct LoadedCheckpoint {
  TrainConfig config;
  Normalizer normalizer;
  CheckpointInfo info;
  Forecaster model;
};

/// One JSON header line (config echo, normalizer, parameter names and shapes, seed)
/// followed by every parameter value as little-endian float64, in declaration order.
void save_checkpoint(const std::string& path, const TrainConfig& config,
                     const Normalizer& normalizer, const Forecaster& model,
                     const CheckpointInfo& info);

/// Throws DataError on malformed files or parameter name/shape disagreement.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace s2cast
