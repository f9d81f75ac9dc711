#include "s2cast/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "s2cast/error.hpp"
#include "s2cast/optimizer.hpp"
#include "s2cast/threads.hpp"
#include "seed.hpp"

namespace s2cast {

namespace {

using json = nlohmann::json;

template <typename T>
void read_field(const json& j, const std::string& key, T& out) {
  try {
    out = j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

void read_size(const json& j, const std::string& key, std::size_t& out) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  out = j.get<std::size_t>();
}

void read_ablation(const json& j, Ablation& ab) {
  if (!j.is_object()) throw ConfigError("config key 'ablation' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool* slot = nullptr;
    if (key == "no_metis") slot = &ab.no_metis;
    else if (key == "no_sh") slot = &ab.no_sh;
    else if (key == "no_intra") slot = &ab.no_intra;
    else if (key == "no_inter") slot = &ab.no_inter;
    else if (key == "no_spatial_bias") slot = &ab.no_spatial_bias;
    else throw ConfigError("unknown config key 'ablation." + key + "'");
    if (!value.is_boolean()) throw ConfigError("config key 'ablation." + key + "' must be boolean");
    *slot = value.get<bool>();
  }
}

void read_split(const json& j, SplitSpec& split) {
  if (!j.is_object()) throw ConfigError("config key 'split' must be an object");
  for (const auto& [key, value] : j.items()) {
    double* slot = nullptr;
    if (key == "train") slot = &split.train;
    else if (key == "val") slot = &split.val;
    else if (key == "test") slot = &split.test;
    else throw ConfigError("unknown config key 'split." + key + "'");
    if (!value.is_number()) throw ConfigError("config key 'split." + key + "' must be a number");
    *slot = value.get<double>();
  }
}

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) {
    h ^= (v >> (8 * b)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  split.validate();
  const std::size_t groups = std::size_t{1} << (model.levels - 1);
  if (p0 == 0 || p0 % groups != 0) {
    throw ConfigError("p0 = " + std::to_string(p0) + " must be divisible by 2^(levels - 1) = " +
                      std::to_string(groups));
  }
  if (model.d_model <= model.sh_width()) {
    throw ConfigError("d_model must exceed (l_max + 1)^2 = " + std::to_string(model.sh_width()));
  }
  if (!(imbalance >= 0.0)) throw ConfigError("imbalance must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("betas must lie in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (train_stride == 0 || eval_stride == 0) throw ConfigError("strides must be positive");
}

TrainConfig parse_train_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "d_model") read_size(value, key, c.model.d_model);
    else if (key == "levels") read_size(value, key, c.model.levels);
    else if (key == "input_steps") read_size(value, key, c.model.input_steps);
    else if (key == "horizon") read_size(value, key, c.model.horizon);
    else if (key == "channels") read_size(value, key, c.model.channels);
    else if (key == "heads") read_size(value, key, c.model.heads);
    else if (key == "ffn_hidden") read_size(value, key, c.model.ffn_hidden);
    else if (key == "l_max") read_field(value, key, c.model.l_max);
    else if (key == "d_max") read_field(value, key, c.model.d_max);
    else if (key == "ablation") read_ablation(value, c.model.ablation);
    else if (key == "p0") read_size(value, key, c.p0);
    else if (key == "imbalance") read_field(value, key, c.imbalance);
    else if (key == "epsilon_km") read_field(value, key, c.epsilon_km);
    else if (key == "lr") read_field(value, key, c.lr);
    else if (key == "beta1") read_field(value, key, c.beta1);
    else if (key == "beta2") read_field(value, key, c.beta2);
    else if (key == "batch_size") read_size(value, key, c.batch_size);
    else if (key == "epochs") read_size(value, key, c.epochs);
    else if (key == "patience") read_size(value, key, c.patience);
    else if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("config key 'seed' must be a non-negative integer");
      c.seed = value.get<std::uint64_t>();
    }
    else if (key == "split") read_split(value, c.split);
    else if (key == "train_stride") read_size(value, key, c.train_stride);
    else if (key == "eval_stride") read_size(value, key, c.eval_stride);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string to_json(const TrainConfig& c) {
  const auto& ab = c.model.ablation;
  json j = {
      {"d_model", c.model.d_model},
      {"levels", c.model.levels},
      {"input_steps", c.model.input_steps},
      {"horizon", c.model.horizon},
      {"channels", c.model.channels},
      {"heads", c.model.heads},
      {"ffn_hidden", c.model.ffn_hidden},
      {"l_max", c.model.l_max},
      {"d_max", c.model.d_max},
      {"ablation",
       {{"no_metis", ab.no_metis},
        {"no_sh", ab.no_sh},
        {"no_intra", ab.no_intra},
        {"no_inter", ab.no_inter},
        {"no_spatial_bias", ab.no_spatial_bias}}},
      {"p0", c.p0},
      {"imbalance", c.imbalance},
      {"epsilon_km", c.epsilon_km},
      {"lr", c.lr},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"patience", c.patience},
      {"seed", c.seed},
      {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
      {"train_stride", c.train_stride},
      {"eval_stride", c.eval_stride},
  };
  return j.dump();
}

double resolve_epsilon(const StationSet& stations, double epsilon_km) {
  if (epsilon_km > 0.0) return epsilon_km;
  const std::size_t k = std::min<std::size_t>(8, stations.size() - 1);
  if (k == 0) return 1.0;
  // Strict edge rule: nudge past the quantile so the k-th neighbor itself is included.
  return epsilon_from_knn_quantile(stations, k, 0.5) * (1.0 + 1e-9);
}

Pipeline build_pipeline(const StationSet& stations, const TrainConfig& config) {
  config.validate();
  Pipeline pl;
  pl.epsilon_km = resolve_epsilon(stations, config.epsilon_km);
  pl.graph = build_spatial_graph(stations, pl.epsilon_km);
  const auto method = config.model.ablation.no_metis ? PartitionMethod::kRandom
                                                     : PartitionMethod::kMultilevel;
  pl.hierarchy = build_hierarchy(pl.graph, config.p0, config.model.levels, config.imbalance,
                                 config.seed, method);
  pl.basis = build_basis(stations, config.model.l_max);
  pl.context = ModelContext::build(pl.hierarchy, pl.basis, config.model.d_max);
  return pl;
}

double validation_mae(Forecaster& model, const Pipeline& pipeline,
                      const std::vector<double>& normalized, std::size_t n, std::size_t c,
                      const std::vector<std::size_t>& starts, std::size_t batch_size) {
  const auto& cfg = model.config();
  const std::size_t batches = (starts.size() + batch_size - 1) / batch_size;
  std::vector<double> sums(batches, 0.0);
  parallel_chunks(batches, worker_threads(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const std::vector<std::size_t> chunk(
          starts.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
          starts.begin() + static_cast<std::ptrdiff_t>(std::min(starts.size(), (b + 1) * batch_size)));
      const auto batch = make_batch(normalized, n, c, chunk, cfg.input_steps, cfg.horizon);
      nn::Tape tape;
      const auto pred = model.forward(tape, pipeline.context, batch.input).value();
      double s = 0.0;
      for (std::size_t k = 0; k < pred.size(); ++k) {
        s += std::abs(static_cast<double>(pred[k]) - static_cast<double>(batch.target[k]));
      }
      sums[b] = s;
    }
  });
  double total = 0.0;
  for (double s : sums) total += s;
  const double count = static_cast<double>(starts.size() * n * cfg.horizon * c);
  return total / count;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const Pipeline& pipeline) {
  config.validate();
  const auto& mc = config.model;
  if (mc.channels != dataset.c()) {
    throw ConfigError("config channels = " + std::to_string(mc.channels) + " but dataset has " +
                      std::to_string(dataset.c()));
  }
  if (pipeline.context.n != dataset.n()) {
    throw std::invalid_argument("pipeline was built for a different station set");
  }
  const std::size_t n = dataset.n();
  const std::size_t c = dataset.c();

  TrainResult result{Forecaster(mc, config.seed), fit_normalizer(dataset, config.split), {}, 0,
                     std::numeric_limits<double>::infinity(), 0, 0, {}, false, {}};
  const auto normalized = normalize_series(dataset, result.normalizer);
  const auto train_starts =
      window_starts(split_span(dataset.t_total, config.split, Split::kTrain), mc.input_steps,
                    mc.horizon, config.train_stride);
  const auto val_starts =
      window_starts(split_span(dataset.t_total, config.split, Split::kVal), mc.input_steps,
                    mc.horizon, config.eval_stride);

  Forecaster model(mc, config.seed);
  nn::Adam adam(model.params(), {static_cast<nn::Real>(config.lr),
                                 static_cast<nn::Real>(config.beta1),
                                 static_cast<nn::Real>(config.beta2), nn::Real(1e-8)});
  std::uint64_t order_hash = 0xcbf29ce484222325ULL;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order = train_starts;
    std::mt19937_64 rng(detail::derive_seed(config.seed, 0x1000 + epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::uint64_t epoch_hash = 0xcbf29ce484222325ULL;
    for (auto s : order) epoch_hash = fnv1a(epoch_hash, s);
    result.epoch_order_hashes.push_back(epoch_hash);
    try {
      for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
        const std::vector<std::size_t> chunk(
            order.begin() + static_cast<std::ptrdiff_t>(b),
            order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + config.batch_size)));
        for (auto s : chunk) order_hash = fnv1a(order_hash, s);
        const auto batch = make_batch(normalized, n, c, chunk, mc.input_steps, mc.horizon);
        nn::Tape tape;
        auto loss = nn::mae_loss(model.forward(tape, pipeline.context, batch.input), batch.target);
        model.params().zero_grad();
        tape.backward(loss);
        adam.step();
        for (const auto& p : model.params()) {
          if (!p.value.all_finite()) throw NumericalError("parameter " + p.name + " became non-finite");
        }
        loss_sum += static_cast<double>(loss.value()[0]);
        ++batches;
        ++result.steps;
      }
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }

    const double val = validation_mae(model, pipeline, normalized, n, c, val_starts,
                                      config.batch_size);
    result.history.push_back({epoch, loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)), val});
    if (val < result.best_val_mae) {
      result.best_val_mae = val;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      break;
    }
  }
  result.data_order_hash = order_hash;
  return result;
}

}  // namespace s2cast
