#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "s2cast/hierarchy.hpp"
#include "s2cast/ops.hpp"
#include "s2cast/spherical_harmonics.hpp"
#include "s2cast/tape.hpp"

namespace s2cast {

/// Component switches for the ablation variants.
struct Ablation {
  bool no_metis = false;         // random balanced partitions instead of the multilevel partitioner
  bool no_sh = false;            // zero location features
  bool no_intra = false;         // values pass through without intra-part attention
  bool no_inter = false;         // zero global context
  bool no_spatial_bias = false;  // no shortest-path bias tables

  bool any() const { return no_metis || no_sh || no_intra || no_inter || no_spatial_bias; }
  friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t input_steps = 48;
  std::size_t horizon = 24;
  std::size_t channels = 1;
  int l_max = 3;
  std::size_t heads = 1;
  int d_max = 8;
  std::size_t levels = 2;
  std::size_t ffn_hidden = 0;  // 0 selects 2 * d_model
  Ablation ablation;

  std::size_t hidden() const { return ffn_hidden == 0 ? 2 * d_model : ffn_hidden; }
  std::size_t sh_width() const { return harmonic_count(l_max); }
  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Bias-table slot for a hop distance: -1 -> 0, d -> min(d, d_max) + 1.
std::int32_t bias_bucket(std::int32_t spd, int d_max);

/// Index data the forward pass needs for one hierarchy level.
struct LevelPlan {
  std::size_t p = 0;
  std::size_t m = 0;
  nn::SlotMask mask;                       // p x m
  nn::BiasIndex intra_bias_index;          // p * m * m buckets (padding -> 0)
  nn::BiasIndex inter_bias_index;          // p * p buckets
  std::vector<std::int64_t> slot_to_node;  // p * m, -1 = padding
  std::vector<std::size_t> node_to_slot;   // n
};

/// Everything derived from stations and partitions, shared by all forward passes.
struct ModelContext {
  std::size_t n = 0;
  std::vector<LevelPlan> levels;
  nn::Tensor basis;  // n x (l_max + 1)^2

  static ModelContext build(const PartitionHierarchy& hierarchy, const HarmonicBasis& basis,
                            int d_max);
};

/// Post-softmax weights of one level for one sample; padded entries are 0.
struct LevelAttention {
  std::size_t p = 0;
  std::size_t m = 0;
  std::vector<double> intra;  // p x m x m (head-averaged)
  std::vector<double> inter;  // p x p (head-averaged)
};

/// Optional instrumentation filled by Forecaster::forward.
struct ForwardTrace {
  std::size_t score_entries = 0;  // attention scores per sample, all levels
  bool keep_attention = false;
  std::vector<nn::Var> intra_weights;  // per level [B * P, H, M, M]
  std::vector<nn::Var> inter_weights;  // per level [B, H, P, P]
};

/// Spatial structured attention forecaster.
class Forecaster {
 public:
  Forecaster(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  /// input [B, N, T, C] -> prediction [B, N, F, C].
  nn::Var forward(nn::Tape& tape, const ModelContext& ctx, const nn::Tensor& input,
                  ForwardTrace* trace = nullptr);

  /// [B, N, T, C] -> [B, N, D].
  nn::Var embed(nn::Tape& tape, const nn::Tensor& input);
  /// Concatenates location features onto x [B, N, D] and projects back to D.
  nn::Var fuse_location(nn::Tape& tape, nn::Var x, const ModelContext& ctx);
  /// One block over x [B * P, M, D] laid out for `plan`.
  nn::Var ssa_block(nn::Tape& tape, std::size_t block, nn::Var x, const LevelPlan& plan,
                    std::size_t batch, ForwardTrace* trace = nullptr);

 private:

  nn::Var p(nn::Tape& tape, const std::string& name);

  ModelConfig config_;
  nn::ParameterStore params_;
};

/// [B, N, D] -> [B * P, M, D] and back, by row gathers.
nn::Var to_blocks(nn::Var x, const LevelPlan& plan, std::size_t batch);
nn::Var from_blocks(nn::Var x, const LevelPlan& plan, std::size_t batch, std::size_t n);

/// Runs one forward pass on a single sample and returns every level's attention maps.
std::vector<LevelAttention> attention_maps(Forecaster& model, const ModelContext& ctx,
                                           const nn::Tensor& sample);

/// Per-sample attention score count implied by the hierarchy: sum over levels of
/// P * M^2 + P^2.
std::size_t expected_score_entries(const PartitionHierarchy& hierarchy);

}  // namespace s2cast
