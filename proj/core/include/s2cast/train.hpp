#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "s2cast/dataset.hpp"
#include "s2cast/hierarchy.hpp"
#include "s2cast/model.hpp"
#include "s2cast/spatial_graph.hpp"
#include "s2cast/spherical_harmonics.hpp"

namespace s2cast {

struct TrainConfig {
  ModelConfig model;
  std::size_t p0 = 32;
  double imbalance = 0.03;
  double epsilon_km = 0.0;  // <= 0 selects the median 8th-nearest-neighbor distance
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t batch_size = 8;
  std::size_t epochs = 20;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  SplitSpec split;
  std::size_t train_stride = 1;
  std::size_t eval_stride = 1;

  /// Throws ConfigError; also checks P0 divisibility by 2^(L-1) and D > (l_max + 1)^2.
  void validate() const;
};

/// Parses a JSON object of TrainConfig fields; unknown keys and wrong types throw ConfigError.
/// Absent keys keep their defaults.
TrainConfig parse_train_config(std::string_view json_text);
/// Every field, as a JSON object; parse_train_config(to_json(c)) round-trips.
std::string to_json(const TrainConfig& config);

/// Station-dependent structures shared by training, evaluation and prediction.
struct Pipeline {
  double epsilon_km = 0.0;
  SpatialGraph graph;
  PartitionHierarchy hierarchy;
  HarmonicBasis basis;
  ModelContext context;
};

double resolve_epsilon(const StationSet& stations, double epsilon_km);
Pipeline build_pipeline(const StationSet& stations, const TrainConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean batch MAE, z-scored units
  double val_mae = 0.0;     // z-scored units
};

struct TrainResult {
  Forecaster model;          // parameters of the best validation epoch
  Normalizer normalizer;
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  std::size_t steps = 0;     // optimizer steps taken
  std::uint64_t data_order_hash = 0;  // FNV-1a over every batch's window starts, in order
  std::vector<std::uint64_t> epoch_order_hashes;  // the same hash restricted to each epoch
  bool diverged = false;     // a non-finite value stopped training early
  std::string divergence;    // message of the numerical failure
};

/// Adam on MAE with early stopping on validation MAE. The returned model holds the
/// best-on-validation parameters. Batch order is a seeded shuffle per epoch.
TrainResult train(const TrainConfig& config, const Dataset& dataset, const Pipeline& pipeline);

/// Validation MAE in z-scored units over windows of the validation span.
double validation_mae(Forecaster& model, const Pipeline& pipeline,
                      const std::vector<double>& normalized, std::size_t n, std::size_t c,
                      const std::vector<std::size_t>& starts, std::size_t batch_size);

}  // namespace s2cast
