#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "s2cast/dataset.hpp"
#include "s2cast/model.hpp"
#include "s2cast/train.hpp"

namespace s2cast {

/// Error statistics over inverse-normalized (original unit) values.
struct ErrorStats {
  std::vector<double> mae;  // per channel
  std::vector<double> mse;  // per channel
  double overall_mae = 0.0;
  double overall_mse = 0.0;
};

struct MetricsReport {
  std::string split;
  std::size_t windows = 0;
  std::vector<std::string> channels;
  ErrorStats model;
  ErrorStats persistence;  // repeat the last observed frame for every lead
  std::vector<EpochLog> history;
  std::size_t score_entries = 0;     // attention scores per sample, measured
  std::size_t expected_entries = 0;  // sum over levels of P * M^2 + P^2
};

/// Accumulates absolute and squared errors per channel. Sums run in a fixed order so
/// results do not depend on how windows were sharded.
class ErrorAccumulator {
 public:
  explicit ErrorAccumulator(std::size_t channels);
  void add(std::size_t channel, double prediction, double truth);
  void merge(const ErrorAccumulator& other);
  ErrorStats stats() const;

 private:
  std::vector<double> abs_;
  std::vector<double> sq_;
  std::vector<std::size_t> count_;
};

/// Forecast error of `model` on one split. Windows are sharded across worker_threads()
/// threads; per-window partial sums are reduced in window order.
MetricsReport evaluate(Forecaster& model, const Pipeline& pipeline, const Dataset& dataset,
                       const Normalizer& normalizer, const SplitSpec& split, Split which,
                       std::size_t stride = 1, std::size_t batch_size = 8);

/// Predictions in original units for the window starting at `start`: [N, F, C] row-major.
std::vector<double> predict_window(Forecaster& model, const Pipeline& pipeline,
                                   const Dataset& dataset, const Normalizer& normalizer,
                                   std::size_t start);

std::string to_json(const MetricsReport& report);

struct AblationRow {
  std::string variant;  // "full", "w/o Metis", "w/o SH", "w/o Intra-Att", "w/o Inter-Att", "w/o SA"
  Ablation ablation;
  std::size_t parameters = 0;
  std::size_t train_windows = 0;
  std::uint64_t data_order_hash = 0;  // hash of the batch order seen during training
  std::vector<std::uint64_t> epoch_order_hashes;
  MetricsReport test;
};

/// The five single-component variants of the paper's ablation study.
std::vector<std::pair<std::string, Ablation>> ablation_variants();

/// Trains and tests the full model and each listed variant with the same seed and data
/// order. `variants` empty means all five.
std::vector<AblationRow> run_ablations(const TrainConfig& config, const Dataset& dataset,
                                       const std::vector<std::string>& variants = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace s2cast
