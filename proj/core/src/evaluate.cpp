#include "s2cast/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "s2cast/threads.hpp"

namespace s2cast {

ErrorAccumulator::ErrorAccumulator(std::size_t channels)
    : abs_(channels, 0.0), sq_(channels, 0.0), count_(channels, 0) {}

void ErrorAccumulator::add(std::size_t channel, double prediction, double truth) {
  const double e = prediction - truth;
  abs_[channel] += std::abs(e);
  sq_[channel] += e * e;
  ++count_[channel];
}

void ErrorAccumulator::merge(const ErrorAccumulator& other) {
  for (std::size_t c = 0; c < abs_.size(); ++c) {
    abs_[c] += other.abs_[c];
    sq_[c] += other.sq_[c];
    count_[c] += other.count_[c];
  }
}

ErrorStats ErrorAccumulator::stats() const {
  ErrorStats s;
  double abs_total = 0.0;
  double sq_total = 0.0;
  std::size_t count_total = 0;
  for (std::size_t c = 0; c < abs_.size(); ++c) {
    const double k = count_[c] ? static_cast<double>(count_[c]) : 1.0;
    s.mae.push_back(abs_[c] / k);
    s.mse.push_back(sq_[c] / k);
    abs_total += abs_[c];
    sq_total += sq_[c];
    count_total += count_[c];
  }
  const double k = count_total ? static_cast<double>(count_total) : 1.0;
  s.overall_mae = abs_total / k;
  s.overall_mse = sq_total / k;
  return s;
}

MetricsReport evaluate(Forecaster& model, const Pipeline& pipeline, const Dataset& dataset,
                       const Normalizer& normalizer, const SplitSpec& split, Split which,
                       std::size_t stride, std::size_t batch_size) {
  const auto& cfg = model.config();
  const std::size_t n = dataset.n();
  const std::size_t c = dataset.c();
  const std::size_t t_in = cfg.input_steps;
  const std::size_t f = cfg.horizon;
  if (cfg.channels != c) throw std::invalid_argument("evaluate: model/dataset channel mismatch");
  if (pipeline.context.n != n) throw std::invalid_argument("evaluate: pipeline/dataset mismatch");
  if (batch_size == 0) batch_size = 1;

  const auto normalized = normalize_series(dataset, normalizer);
  const auto starts = window_starts(split_span(dataset.t_total, split, which), t_in, f, stride);
  const std::size_t batches = (starts.size() + batch_size - 1) / batch_size;

  std::vector<ErrorAccumulator> model_acc(batches, ErrorAccumulator(c));
  std::vector<ErrorAccumulator> base_acc(batches, ErrorAccumulator(c));
  std::vector<std::size_t> entries(batches, 0);

  parallel_chunks(batches, worker_threads(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const std::vector<std::size_t> chunk(
          starts.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
          starts.begin() + static_cast<std::ptrdiff_t>(std::min(starts.size(), (b + 1) * batch_size)));
      const auto batch = make_batch(normalized, n, c, chunk, t_in, f);
      nn::Tape tape;
      ForwardTrace trace;
      const auto pred = model.forward(tape, pipeline.context, batch.input, &trace).value();
      entries[b] = trace.score_entries;
      for (std::size_t k = 0; k < chunk.size(); ++k) {
        const std::size_t s = chunk[k];
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t lead = 0; lead < f; ++lead) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double truth = dataset.value(s + t_in + lead, i, ch);
              const double yhat =
                  normalizer.invert(pred[((k * n + i) * f + lead) * c + ch], ch);
              model_acc[b].add(ch, yhat, truth);
              base_acc[b].add(ch, dataset.value(s + t_in - 1, i, ch), truth);
            }
          }
        }
      }
    }
  });

  ErrorAccumulator model_total(c);
  ErrorAccumulator base_total(c);
  for (std::size_t b = 0; b < batches; ++b) {
    model_total.merge(model_acc[b]);
    base_total.merge(base_acc[b]);
  }
  MetricsReport report;
  report.split = split_name(which);
  report.windows = starts.size();
  report.channels = dataset.channels;
  report.model = model_total.stats();
  report.persistence = base_total.stats();
  report.score_entries = batches ? entries.front() : 0;
  report.expected_entries = expected_score_entries(pipeline.hierarchy);
  return report;
}

std::vector<double> predict_window(Forecaster& model, const Pipeline& pipeline,
                                   const Dataset& dataset, const Normalizer& normalizer,
                                   std::size_t start) {
  const auto& cfg = model.config();
  const std::size_t n = dataset.n();
  const std::size_t c = dataset.c();
  if (start + cfg.input_steps > dataset.t_total) {
    throw std::invalid_argument("predict: input window runs past the end of the series");
  }
  nn::Tensor input({1, n, cfg.input_steps, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < cfg.input_steps; ++t) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        input[(i * cfg.input_steps + t) * c + ch] =
            static_cast<nn::Real>(normalizer.apply(dataset.value(start + t, i, ch), ch));
      }
    }
  }
  nn::Tape tape;
  const auto pred = model.forward(tape, pipeline.context, input).value();
  std::vector<double> out(pred.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = normalizer.invert(pred[k], k % c);
  return out;
}

namespace {

nlohmann::json stats_json(const ErrorStats& s, const std::vector<std::string>& channels) {
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t c = 0; c < channels.size(); ++c) {
    per[channels[c]] = {{"mae", s.mae[c]}, {"mse", s.mse[c]}};
  }
  return {{"mae", s.overall_mae}, {"mse", s.overall_mse}, {"per_channel", per}};
}

}  // namespace

std::string to_json(const MetricsReport& r) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : r.history) {
    history.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_mae", e.val_mae}});
  }
  nlohmann::json j = {
      {"split", r.split},
      {"windows", r.windows},
      {"model", stats_json(r.model, r.channels)},
      {"persistence", stats_json(r.persistence, r.channels)},
      {"history", history},
      {"attention_cost", {{"score_entries_per_sample", r.score_entries},
                          {"expected_entries", r.expected_entries}}},
  };
  return j.dump(2);
}

std::vector<std::pair<std::string, Ablation>> ablation_variants() {
  std::vector<std::pair<std::string, Ablation>> v;
  Ablation a;
  a.no_metis = true;
  v.emplace_back("w/o Metis", a);
  a = {};
  a.no_sh = true;
  v.emplace_back("w/o SH", a);
  a = {};
  a.no_intra = true;
  v.emplace_back("w/o Intra-Att", a);
  a = {};
  a.no_inter = true;
  v.emplace_back("w/o Inter-Att", a);
  a = {};
  a.no_spatial_bias = true;
  v.emplace_back("w/o SA", a);
  return v;
}

std::vector<AblationRow> run_ablations(const TrainConfig& config, const Dataset& dataset,
                                       const std::vector<std::string>& variants) {
  std::vector<std::pair<std::string, Ablation>> todo = {{"full", Ablation{}}};
  for (const auto& [name, ab] : ablation_variants()) {
    if (variants.empty() || std::find(variants.begin(), variants.end(), name) != variants.end()) {
      todo.emplace_back(name, ab);
    }
  }
  for (const auto& want : variants) {
    if (std::none_of(todo.begin(), todo.end(), [&](const auto& t) { return t.first == want; })) {
      throw std::invalid_argument("unknown ablation variant '" + want + "'");
    }
  }

  std::vector<AblationRow> rows;
  for (const auto& [name, ab] : todo) {
    TrainConfig cfg = config;
    cfg.model.ablation = ab;
    const Pipeline pipeline = build_pipeline(dataset.stations, cfg);
    auto result = train(cfg, dataset, pipeline);
    AblationRow row;
    row.variant = name;
    row.ablation = ab;
    row.parameters = result.model.params().scalar_count();
    row.train_windows =
        window_starts(split_span(dataset.t_total, cfg.split, Split::kTrain),
                      cfg.model.input_steps, cfg.model.horizon, cfg.train_stride)
            .size();
    row.data_order_hash = result.data_order_hash;
    row.epoch_order_hashes = result.epoch_order_hashes;
    row.test = evaluate(result.model, pipeline, dataset, result.normalizer, cfg.split,
                        Split::kTest, cfg.eval_stride, cfg.batch_size);
    row.test.history = result.history;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "variant,parameters,epochs_run,test_mae,test_mse,persistence_mae\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << r.parameters << ',' << r.test.history.size() << ','
       << r.test.model.overall_mae << ',' << r.test.model.overall_mse << ','
       << r.test.persistence.overall_mae << '\n';
  }
  return os.str();
}

}  // namespace s2cast
