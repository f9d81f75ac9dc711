#include "s2cast/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>

#include "s2cast/error.hpp"
#include "seed.hpp"

namespace s2cast {

using nn::Real;
using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

void ModelConfig::validate() const {
  if (d_model == 0) throw ConfigError("d_model must be positive");
  if (input_steps == 0 || horizon == 0 || channels == 0) {
    throw ConfigError("input_steps, horizon and channels must be positive");
  }
  if (l_max < 0) throw ConfigError("l_max must be non-negative");
  if (heads == 0 || d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  if (d_max < 1) throw ConfigError("d_max must be >= 1");
  if (levels == 0) throw ConfigError("levels must be >= 1");
}

std::int32_t bias_bucket(std::int32_t spd, int d_max) {
  if (spd < 0) return 0;
  return std::min<std::int32_t>(spd, d_max) + 1;
}

ModelContext ModelContext::build(const PartitionHierarchy& hierarchy, const HarmonicBasis& basis,
                                 int d_max) {
  ModelContext ctx;
  ctx.n = hierarchy.node_count();
  if (basis.rows() != ctx.n) throw std::invalid_argument("basis rows do not match node count");
  ctx.basis = Tensor({basis.rows(), basis.cols()},
                     std::vector<Real>(basis.values().begin(), basis.values().end()));
  for (const auto& level : hierarchy.levels) {
    LevelPlan plan;
    const auto& layout = level.layout;
    plan.p = layout.p;
    plan.m = layout.m;
    plan.mask = nn::SlotMask{layout.p, layout.m, layout.pad_mask};
    plan.slot_to_node = layout.slot_to_node;
    plan.node_to_slot = layout.node_to_slot;

    auto intra = std::make_shared<std::vector<std::int32_t>>(layout.p * layout.m * layout.m, 0);
    for (std::size_t q = 0; q < layout.p; ++q) {
      const auto& table = level.intra[q];
      for (std::size_t i = 0; i < table.size(); ++i) {
        for (std::size_t j = 0; j < table.size(); ++j) {
          (*intra)[(q * layout.m + i) * layout.m + j] = bias_bucket(table(i, j), d_max);
        }
      }
    }
    auto inter = std::make_shared<std::vector<std::int32_t>>(layout.p * layout.p, 0);
    for (std::size_t a = 0; a < layout.p; ++a) {
      for (std::size_t b = 0; b < layout.p; ++b) {
        (*inter)[a * layout.p + b] = bias_bucket(level.coarse(a, b), d_max);
      }
    }
    plan.intra_bias_index = std::move(intra);
    plan.inter_bias_index = std::move(inter);
    ctx.levels.push_back(std::move(plan));
  }
  return ctx;
}

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor t({fan_in, fan_out});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(dist(rng));
  return t;
}

std::string block_name(std::size_t b, const std::string& leaf) {
  return "block" + std::to_string(b) + "." + leaf;
}

}  // namespace

Forecaster::Forecaster(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(detail::derive_seed(seed, 0x6d6f64656cULL));
  const std::size_t d = config_.d_model;
  const std::size_t h = config_.hidden();
  const std::size_t k = config_.sh_width();
  const std::size_t table = static_cast<std::size_t>(config_.d_max) + 2;
  const auto& ab = config_.ablation;

  params_.add("embed.w", xavier(config_.input_steps * config_.channels, d, rng));
  params_.add("embed.b", Tensor({d}));
  if (!ab.no_sh) params_.add("sh.w", Tensor({k}, Real{1}));
  params_.add("fuse.w", xavier(d + k, d, rng));
  params_.add("fuse.b", Tensor({d}));
  for (std::size_t b = 0; b < config_.levels; ++b) {
    if (!ab.no_intra) {
      params_.add(block_name(b, "intra.wq"), xavier(d, d, rng));
      params_.add(block_name(b, "intra.wk"), xavier(d, d, rng));
    }
    params_.add(block_name(b, "intra.wv"), xavier(d, d, rng));
    params_.add(block_name(b, "intra.ffn.w1"), xavier(d, h, rng));
    params_.add(block_name(b, "intra.ffn.b1"), Tensor({h}));
    params_.add(block_name(b, "intra.ffn.w2"), xavier(h, d, rng));
    params_.add(block_name(b, "intra.ffn.b2"), Tensor({d}));
    if (!ab.no_inter) {
      params_.add(block_name(b, "inter.wq"), xavier(d, d, rng));
      params_.add(block_name(b, "inter.wk"), xavier(d, d, rng));
      params_.add(block_name(b, "inter.wv"), xavier(d, d, rng));
      params_.add(block_name(b, "inter.ffn.w1"), xavier(d, h, rng));
      params_.add(block_name(b, "inter.ffn.b1"), Tensor({h}));
      params_.add(block_name(b, "inter.ffn.w2"), xavier(h, d, rng));
      params_.add(block_name(b, "inter.ffn.b2"), Tensor({d}));
    }
    params_.add(block_name(b, "fusion.w"), xavier(2 * d, d, rng));
  }
  if (!ab.no_spatial_bias) {
    if (!ab.no_intra) params_.add("bias.intra", Tensor({table}));
    if (!ab.no_inter) params_.add("bias.inter", Tensor({table}));
  }
  params_.add("head.w", xavier(d, config_.horizon * config_.channels, rng));
  params_.add("head.b", Tensor({config_.horizon * config_.channels}));
}

Var Forecaster::p(Tape& tape, const std::string& name) { return tape.param(params_.get(name)); }

Var Forecaster::embed(Tape& tape, const Tensor& input) {
  if (input.rank() != 4 || input.dim(2) != config_.input_steps || input.dim(3) != config_.channels) {
    throw std::invalid_argument("embed: expected input [B, N, " + std::to_string(config_.input_steps) +
                                ", " + std::to_string(config_.channels) + "], got " +
                                nn::to_string(input.shape()));
  }
  const std::size_t b = input.dim(0);
  const std::size_t n = input.dim(1);
  Var x = tape.constant(input.reshaped({b, n, config_.input_steps * config_.channels}));
  return nn::linear(x, p(tape, "embed.w"), p(tape, "embed.b"));
}

Var Forecaster::fuse_location(Tape& tape, Var x, const ModelContext& ctx) {
  const auto& shape = x.value().shape();
  if (shape.size() != 3 || shape[1] != ctx.n || shape[2] != config_.d_model) {
    throw std::invalid_argument("fuse_location: expected [B, " + std::to_string(ctx.n) + ", " +
                                std::to_string(config_.d_model) + "], got " + nn::to_string(shape));
  }
  if (ctx.basis.rank() != 2 || ctx.basis.dim(1) != config_.sh_width()) {
    throw std::invalid_argument("fuse_location: basis width does not match l_max");
  }
  const std::size_t b = shape[0];
  Var sh;
  if (config_.ablation.no_sh) {
    sh = tape.constant(Tensor({b, ctx.n, config_.sh_width()}));
  } else {
    Var encoded = nn::scale_columns(tape.constant(ctx.basis), p(tape, "sh.w"));
    sh = nn::repeat_leading(encoded, b);
  }
  return nn::linear(nn::concat_last(x, sh), p(tape, "fuse.w"), p(tape, "fuse.b"));
}

Var to_blocks(Var x, const LevelPlan& plan, std::size_t batch) {
  const std::size_t n = plan.node_to_slot.size();
  const std::size_t d = x.value().shape().back();
  auto rows = std::make_shared<std::vector<std::int64_t>>(batch * plan.p * plan.m);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < plan.p * plan.m; ++s) {
      const auto node = plan.slot_to_node[s];
      (*rows)[b * plan.p * plan.m + s] =
          node < 0 ? -1 : static_cast<std::int64_t>(b * n) + node;
    }
  }
  return nn::gather_rows(x, rows, {batch * plan.p, plan.m, d});
}

Var from_blocks(Var x, const LevelPlan& plan, std::size_t batch, std::size_t n) {
  const std::size_t d = x.value().shape().back();
  auto rows = std::make_shared<std::vector<std::int64_t>>(batch * n);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t v = 0; v < n; ++v) {
      (*rows)[b * n + v] = static_cast<std::int64_t>(b * plan.p * plan.m + plan.node_to_slot[v]);
    }
  }
  return nn::gather_rows(x, rows, {batch, n, d});
}

Var Forecaster::ssa_block(Tape& tape, std::size_t block, Var x, const LevelPlan& plan,
                          std::size_t batch, ForwardTrace* trace) {
  const auto& ab = config_.ablation;
  const std::size_t d = config_.d_model;
  const auto& shape = x.value().shape();
  if (shape.size() != 3 || shape[0] != batch * plan.p || shape[1] != plan.m || shape[2] != d) {
    throw std::invalid_argument("ssa_block: input " + nn::to_string(shape) +
                                " does not match the level layout");
  }
  const std::size_t slices = batch * plan.p;
  auto name = [&](const std::string& leaf) { return block_name(block, leaf); };

  // Local context within each part.
  Var context;
  if (!ab.no_intra) {
    Var bias;
    if (!ab.no_spatial_bias) {
      bias = nn::lookup(p(tape, "bias.intra"), plan.intra_bias_index, {plan.p, plan.m, plan.m});
    }
    auto att = nn::attention(x, {p(tape, name("intra.wq")), p(tape, name("intra.wk")),
                                 p(tape, name("intra.wv"))},
                             config_.heads, bias.valid() ? &bias : nullptr, &plan.mask);
    context = att.context;
    if (trace) {
      trace->score_entries += plan.p * plan.m * plan.m;
      if (trace->keep_attention) trace->intra_weights.push_back(att.weights);
    }
  } else {
    context = nn::linear(x, p(tape, name("intra.wv")));
  }
  Var local = nn::ffn(context, {p(tape, name("intra.ffn.w1")), p(tape, name("intra.ffn.b1")),
                                p(tape, name("intra.ffn.w2")), p(tape, name("intra.ffn.b2"))});

  // Global context among part summaries.
  Var global;
  if (!ab.no_inter) {
    Var pooled = nn::reshape(nn::masked_mean(local, &plan.mask), {batch, plan.p, d});
    Var bias;
    if (!ab.no_spatial_bias) {
      bias = nn::lookup(p(tape, "bias.inter"), plan.inter_bias_index, {1, plan.p, plan.p});
    }
    auto att = nn::attention(pooled, {p(tape, name("inter.wq")), p(tape, name("inter.wk")),
                                      p(tape, name("inter.wv"))},
                             config_.heads, bias.valid() ? &bias : nullptr, nullptr);
    if (trace) {
      trace->score_entries += plan.p * plan.p;
      if (trace->keep_attention) trace->inter_weights.push_back(att.weights);
    }
    Var mixed = nn::ffn(att.context, {p(tape, name("inter.ffn.w1")), p(tape, name("inter.ffn.b1")),
                                      p(tape, name("inter.ffn.w2")), p(tape, name("inter.ffn.b2"))});
    global = nn::reshape(mixed, {slices, d});
  } else {
    global = tape.constant(Tensor({slices, d}));
  }

  Var fused = nn::linear(nn::concat_last(local, nn::broadcast_expand(global, plan.m)),
                         p(tape, name("fusion.w")));
  return nn::mask_rows(nn::add(fused, x), plan.mask);
}

Var Forecaster::forward(Tape& tape, const ModelContext& ctx, const Tensor& input,
                        ForwardTrace* trace) {
  if (ctx.levels.size() != config_.levels) {
    throw std::invalid_argument("forward: hierarchy has " + std::to_string(ctx.levels.size()) +
                                " levels, model expects " + std::to_string(config_.levels));
  }
  if (input.rank() != 4 || input.dim(1) != ctx.n) {
    throw std::invalid_argument("forward: input " + nn::to_string(input.shape()) +
                                " does not match station count " + std::to_string(ctx.n));
  }
  const std::size_t batch = input.dim(0);
  Var x = fuse_location(tape, embed(tape, input), ctx);
  for (std::size_t level = 0; level < ctx.levels.size(); ++level) {
    const auto& plan = ctx.levels[level];
    Var blocks = ssa_block(tape, level, to_blocks(x, plan, batch), plan, batch, trace);
    x = from_blocks(blocks, plan, batch, ctx.n);
  }
  Var y = nn::linear(x, p(tape, "head.w"), p(tape, "head.b"));
  return nn::reshape(y, {batch, ctx.n, config_.horizon, config_.channels});
}

std::vector<LevelAttention> attention_maps(Forecaster& model, const ModelContext& ctx,
                                           const Tensor& sample) {
  if (sample.rank() != 4 || sample.dim(0) != 1) {
    throw std::invalid_argument("attention_maps expects a single sample [1, N, T, C]");
  }
  Tape tape;
  ForwardTrace trace;
  trace.keep_attention = true;
  model.forward(tape, ctx, sample, &trace);

  std::vector<LevelAttention> out;
  for (std::size_t level = 0; level < ctx.levels.size(); ++level) {
    const auto& plan = ctx.levels[level];
    LevelAttention la;
    la.p = plan.p;
    la.m = plan.m;
    la.intra.assign(plan.p * plan.m * plan.m, 0.0);
    la.inter.assign(plan.p * plan.p, 0.0);
    if (level < trace.intra_weights.size()) {
      const auto& w = trace.intra_weights[level].value();
      const std::size_t heads = w.dim(1);
      for (std::size_t q = 0; q < plan.p; ++q) {
        for (std::size_t i = 0; i < plan.m; ++i) {
          if (!plan.mask(q, i)) continue;
          for (std::size_t j = 0; j < plan.m; ++j) {
            double acc = 0.0;
            for (std::size_t h = 0; h < heads; ++h) {
              acc += static_cast<double>(w[((q * heads + h) * plan.m + i) * plan.m + j]);
            }
            la.intra[(q * plan.m + i) * plan.m + j] = acc / static_cast<double>(heads);
          }
        }
      }
    }
    if (level < trace.inter_weights.size()) {
      const auto& w = trace.inter_weights[level].value();
      const std::size_t heads = w.dim(1);
      for (std::size_t a = 0; a < plan.p; ++a) {
        for (std::size_t b = 0; b < plan.p; ++b) {
          double acc = 0.0;
          for (std::size_t h = 0; h < heads; ++h) {
            acc += static_cast<double>(w[(h * plan.p + a) * plan.p + b]);
          }
          la.inter[a * plan.p + b] = acc / static_cast<double>(heads);
        }
      }
    }
    out.push_back(std::move(la));
  }
  return out;
}

std::size_t expected_score_entries(const PartitionHierarchy& hierarchy) {
  std::size_t total = 0;
  for (const auto& level : hierarchy.levels) {
    total += level.layout.p * level.layout.m * level.layout.m + level.layout.p * level.layout.p;
  }
  return total;
}

}  // namespace s2cast
