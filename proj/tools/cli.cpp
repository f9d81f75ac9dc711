#include "cli.hpp"

#include <chrono>
#include <optional>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "s2cast/checkpoint.hpp"
#include "s2cast/dataset.hpp"
#include "s2cast/error.hpp"
#include "s2cast/evaluate.hpp"
#include "s2cast/hierarchy.hpp"
#include "s2cast/probe.hpp"
#include "s2cast/spatial_graph.hpp"
#include "s2cast/spherical_harmonics.hpp"
#include "s2cast/train.hpp"

namespace s2cast::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string join(const fs::path& dir, const std::string& file) { return (dir / file).string(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw DataError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Run configuration: TrainConfig keys plus optional file paths.
struct RunConfig {
  TrainConfig train;
  bool channels_given = false;
  std::string stations;
  std::string series;
  std::string out_dir;
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
  auto take_path = [&](const char* key, std::string& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
    out = j[key].get<std::string>();
    j.erase(key);
  };
  take_path("stations", rc.stations);
  take_path("series", rc.series);
  take_path("out_dir", rc.out_dir);
  rc.channels_given = j.contains("channels");
  rc.train = parse_train_config(j.dump());
  return rc;
}

void bind_channels(RunConfig& rc, const Dataset& ds) {
  if (rc.channels_given && rc.train.model.channels != ds.c()) {
    throw ConfigError("config channels = " + std::to_string(rc.train.model.channels) +
                      " but the series has " + std::to_string(ds.c()));
  }
  rc.train.model.channels = ds.c();
}

json partition_json(const HierarchyLevel& level, std::size_t index, const SpatialGraph& graph) {
  return {{"level", index + 1},
          {"p", level.partition.p},
          {"m", level.layout.m},
          {"edge_cut", edge_cut(graph, level.partition)},
          {"assignment", level.partition.assignment}};
}

struct SynthArgs {
  SynthConfig config;
  std::string out_dir = ".";
  std::string stations = "stations.csv";
  std::string series = "series.bin";
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  ensure_dir(a.out_dir);
  const Dataset ds = synth_generate(a.config);
  const auto st = join(a.out_dir, a.stations);
  const auto se = join(a.out_dir, a.series);
  save_dataset(st, se, ds);
  out << "wrote " << st << " and " << se << " (" << ds.n() << " stations, " << ds.t_total
      << " steps)\n";
  return kOk;
}

struct PartitionArgs {
  std::string stations;
  std::size_t p0 = 32;
  std::size_t levels = 2;
  double imbalance = kDefaultImbalance;
  double epsilon_km = 0.0;
  std::uint64_t seed = 0;
  std::string method = "multilevel";
  std::string out_dir = ".";
};

int cmd_partition(const PartitionArgs& a, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const StationSet stations = read_stations_csv(a.stations);
  if (a.method != "multilevel" && a.method != "random") {
    throw ConfigError("--method must be multilevel or random");
  }
  const double eps = resolve_epsilon(stations, a.epsilon_km);
  const auto graph = build_spatial_graph(stations, eps);
  const auto hierarchy =
      build_hierarchy(graph, a.p0, a.levels, a.imbalance, a.seed,
                      a.method == "random" ? PartitionMethod::kRandom : PartitionMethod::kMultilevel);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ensure_dir(a.out_dir);
  for (std::size_t l = 0; l < hierarchy.levels.size(); ++l) {
    const auto path = join(a.out_dir, "partition_level" + std::to_string(l + 1) + ".json");
    write_text(path, partition_json(hierarchy.levels[l], l, graph).dump() + "\n");
    out << "level " << l + 1 << ": p = " << hierarchy.levels[l].partition.p
        << ", m = " << hierarchy.levels[l].layout.m
        << ", edge cut = " << edge_cut(graph, hierarchy.levels[l].partition) << " -> " << path
        << "\n";
  }
  out << "epsilon_km = " << format_double(eps) << ", edges = " << graph.edge_count()
      << ", preprocessing wall time = " << format_double(seconds) << " s\n";
  return kOk;
}

struct PreprocessArgs {
  std::string config;
  std::string stations;
  std::string out_dir;
  bool dump_sh = false;
};

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out) {
  RunConfig rc = load_run_config(a.config);
  const std::string stations_path = a.stations.empty() ? rc.stations : a.stations;
  const std::string out_dir = a.out_dir.empty() ? (rc.out_dir.empty() ? "." : rc.out_dir) : a.out_dir;
  if (stations_path.empty()) throw ConfigError("preprocess needs --stations (or 'stations' in the config)");

  const auto t0 = std::chrono::steady_clock::now();
  const StationSet stations = read_stations_csv(stations_path);
  const Pipeline pl = build_pipeline(stations, rc.train);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ensure_dir(out_dir);
  json levels = json::array();
  for (std::size_t l = 0; l < pl.hierarchy.levels.size(); ++l) {
    const auto& level = pl.hierarchy.levels[l];
    write_text(join(out_dir, "partition_level" + std::to_string(l + 1) + ".json"),
               partition_json(level, l, pl.graph).dump() + "\n");
    std::size_t unreachable = 0;
    for (const auto& t : level.intra) {
      for (auto d : t.data()) unreachable += d == SpdTable::kUnreachable;
    }
    levels.push_back({{"level", l + 1},
                      {"p", level.partition.p},
                      {"m", level.layout.m},
                      {"edge_cut", edge_cut(pl.graph, level.partition)},
                      {"intra_unreachable_pairs", unreachable}});
  }
  json summary = {{"n", stations.size()},
                  {"epsilon_km", pl.epsilon_km},
                  {"edges", pl.graph.edge_count()},
                  {"l_max", pl.basis.l_max()},
                  {"levels", levels}};
  write_text(join(out_dir, "preprocess.json"), summary.dump(2) + "\n");
  if (a.dump_sh) {
    std::ostringstream os;
    os.precision(17);
    os << "station_id";
    for (int l = 0; l <= pl.basis.l_max(); ++l) {
      for (int m = -l; m <= l; ++m) os << ",Y_" << l << "_" << m;
    }
    os << "\n";
    for (std::size_t i = 0; i < pl.basis.rows(); ++i) {
      os << stations.ids()[i];
      for (std::size_t k = 0; k < pl.basis.cols(); ++k) os << ',' << pl.basis(i, k);
      os << "\n";
    }
    write_text(join(out_dir, "sh_basis.csv"), os.str());
  }
  out << "preprocessed " << stations.size() << " stations into " << out_dir
      << " (wall time " << format_double(seconds) << " s)\n";
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::string stations;
  std::string series;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  bool ablations = false;
  std::vector<std::string> variants;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  if (a.epochs) rc.train.epochs = *a.epochs;
  const std::string st = a.stations.empty() ? rc.stations : a.stations;
  const std::string se = a.series.empty() ? rc.series : a.series;
  const std::string out_dir = a.out_dir.empty() ? (rc.out_dir.empty() ? "." : rc.out_dir) : a.out_dir;
  if (st.empty() || se.empty()) throw ConfigError("train needs --stations and --series");

  const Dataset ds = load_dataset(st, se);
  bind_channels(rc, ds);
  rc.train.validate();
  ensure_dir(out_dir);

  if (a.ablations) {
    const auto rows = run_ablations(rc.train, ds, a.variants);
    const auto path = join(out_dir, "ablations.csv");
    write_text(path, ablation_csv(rows));
    out << ablation_csv(rows) << "wrote " << path << "\n";
    return kOk;
  }

  const Pipeline pl = build_pipeline(ds.stations, rc.train);
  auto result = train(rc.train, ds, pl);
  const auto ckpt = join(out_dir, "checkpoint.s2c");
  save_checkpoint(ckpt, rc.train, result.normalizer, result.model,
                  {result.best_epoch, result.best_val_mae});
  if (result.diverged) {
    err << "training diverged (" << result.divergence << "); wrote last good checkpoint " << ckpt
        << "\n";
    return kNumericalError;
  }
  auto report = evaluate(result.model, pl, ds, result.normalizer, rc.train.split, Split::kTest,
                         rc.train.eval_stride, rc.train.batch_size);
  report.history = result.history;
  const auto metrics = join(out_dir, "metrics.json");
  write_text(metrics, to_json(report) + "\n");
  out << "best epoch " << result.best_epoch << " (val MAE " << format_double(result.best_val_mae)
      << "), test MAE " << format_double(report.model.overall_mae) << " vs persistence "
      << format_double(report.persistence.overall_mae) << "\nwrote " << ckpt << " and " << metrics
      << "\n";
  return kOk;
}

struct ModelArgs {
  std::string checkpoint;
  std::string stations;
  std::string series;
};

struct Loaded {
  LoadedCheckpoint ckpt;
  Dataset dataset;
  Pipeline pipeline;
};

Loaded load_for_inference(const ModelArgs& a) {
  auto ckpt = load_checkpoint(a.checkpoint);
  Dataset ds = load_dataset(a.stations, a.series);
  if (ds.c() != ckpt.config.model.channels) {
    throw DataError("checkpoint expects " + std::to_string(ckpt.config.model.channels) +
                    " channels, series has " + std::to_string(ds.c()));
  }
  Pipeline pl = build_pipeline(ds.stations, ckpt.config);
  return {std::move(ckpt), std::move(ds), std::move(pl)};
}

std::size_t default_start(const Loaded& l) {
  const std::size_t t = l.ckpt.config.model.input_steps;
  if (l.dataset.t_total < t) throw DataError("series shorter than the input window");
  return l.dataset.t_total - t;
}

struct EvalArgs {
  ModelArgs model;
  std::string split = "test";
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  auto l = load_for_inference(a.model);
  const auto& cfg = l.ckpt.config;
  const auto report = evaluate(l.ckpt.model, l.pipeline, l.dataset, l.ckpt.normalizer, cfg.split,
                               parse_split(a.split), cfg.eval_stride, cfg.batch_size);
  const auto text = to_json(report) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
    out << "wrote " << a.out << "\n";
  }
  return kOk;
}

struct PredictArgs {
  ModelArgs model;
  std::optional<std::size_t> start;
  std::string out = "predictions.csv";
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  auto l = load_for_inference(a.model);
  const std::size_t start = a.start ? *a.start : default_start(l);
  const auto pred = predict_window(l.ckpt.model, l.pipeline, l.dataset, l.ckpt.normalizer, start);
  const std::size_t f = l.ckpt.config.model.horizon;
  const std::size_t c = l.dataset.c();
  std::ostringstream os;
  os.precision(17);
  os << "station_id,lead";
  for (const auto& name : l.dataset.channels) os << ',' << name;
  os << "\n";
  for (std::size_t i = 0; i < l.dataset.n(); ++i) {
    for (std::size_t h = 0; h < f; ++h) {
      os << l.dataset.stations.ids()[i] << ',' << h + 1;
      for (std::size_t ch = 0; ch < c; ++ch) os << ',' << pred[(i * f + h) * c + ch];
      os << "\n";
    }
  }
  write_text(a.out, os.str());
  out << "wrote " << l.dataset.n() * f << " rows to " << a.out << "\n";
  return kOk;
}

struct ExportArgs {
  ModelArgs model;
  std::optional<std::size_t> start;
  std::string out = "attention.json";
};

int cmd_export_attn(const ExportArgs& a, std::ostream& out) {
  auto l = load_for_inference(a.model);
  const std::size_t start = a.start ? *a.start : default_start(l);
  const auto& mc = l.ckpt.config.model;
  const std::size_t n = l.dataset.n();
  const std::size_t c = l.dataset.c();
  nn::Tensor sample({1, n, mc.input_steps, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < mc.input_steps; ++t) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        sample[(i * mc.input_steps + t) * c + ch] = static_cast<nn::Real>(
            l.ckpt.normalizer.apply(l.dataset.value(start + t, i, ch), ch));
      }
    }
  }
  const auto maps = attention_maps(l.ckpt.model, l.pipeline.context, sample);
  json levels = json::array();
  for (std::size_t lv = 0; lv < maps.size(); ++lv) {
    const auto& m = maps[lv];
    const auto& plan = l.pipeline.context.levels[lv];
    json parts = json::array();
    for (std::size_t q = 0; q < m.p; ++q) {
      json ids = json::array();
      json rows = json::array();
      for (std::size_t i = 0; i < m.m; ++i) {
        const auto node = plan.slot_to_node[q * m.m + i];
        ids.push_back(node < 0 ? json(nullptr) : json(l.dataset.stations.ids()[node]));
        rows.push_back(std::vector<double>(m.intra.begin() + static_cast<std::ptrdiff_t>((q * m.m + i) * m.m),
                                           m.intra.begin() + static_cast<std::ptrdiff_t>((q * m.m + i + 1) * m.m)));
      }
      parts.push_back({{"part", q}, {"stations", ids}, {"intra", rows}});
    }
    json inter = json::array();
    for (std::size_t q = 0; q < m.p; ++q) {
      inter.push_back(std::vector<double>(m.inter.begin() + static_cast<std::ptrdiff_t>(q * m.p),
                                          m.inter.begin() + static_cast<std::ptrdiff_t>((q + 1) * m.p)));
    }
    levels.push_back({{"level", lv + 1}, {"p", m.p}, {"m", m.m}, {"parts", parts}, {"inter", inter}});
  }
  json doc = {{"sample_start", start}, {"levels", levels}};
  write_text(a.out, doc.dump() + "\n");
  out << "wrote attention maps for " << maps.size() << " levels to " << a.out << "\n";
  return kOk;
}

struct ProbeArgs {
  std::size_t n = 1000;
  std::vector<std::size_t> grid = {25, 50, 100, 200, 400};
  std::uint64_t seed = 0;
  std::string out = "probe.csv";
};

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  const auto result = complexity_probe(a.n, a.grid, a.seed);
  write_text(a.out, probe_csv(result));
  out << probe_csv(result) << "analytic argmin P = " << result.analytic_argmin
      << ", measured argmin P = " << result.measured_argmin << "\nwrote " << a.out << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"s2cast: station weather forecasting with spatial structured attention"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic spatially correlated dataset");
  s->add_option("--n", synth.config.n, "station count")->required();
  s->add_option("--steps", synth.config.steps, "timesteps");
  s->add_option("--seed", synth.config.seed, "random seed");
  s->add_option("--length-scale", synth.config.length_scale_km, "field correlation length (km)");
  s->add_option("--noise", synth.config.noise, "white noise standard deviation");
  s->add_option("--channels", synth.config.channels, "channel count");
  s->add_option("--advection", synth.config.advection_kmh, "field drift speed (km/h)");
  s->add_option("--out-dir", synth.out_dir, "output directory");
  s->add_option("--stations", synth.stations, "stations CSV file name");
  s->add_option("--series", synth.series, "series file name");

  PartitionArgs part;
  auto* p = app.add_subcommand("partition", "build the multiscale partition hierarchy");
  p->add_option("--stations", part.stations, "stations CSV")->required();
  p->add_option("--p0", part.p0, "part count of the first level");
  p->add_option("--levels", part.levels, "hierarchy levels");
  p->add_option("--imbalance", part.imbalance, "allowed part-size imbalance");
  p->add_option("--epsilon-km", part.epsilon_km, "edge threshold (km); <= 0 selects a default");
  p->add_option("--seed", part.seed, "random seed");
  p->add_option("--method", part.method, "multilevel or random");
  p->add_option("--out-dir", part.out_dir, "output directory");

  PreprocessArgs pre;
  auto* pp = app.add_subcommand("preprocess", "graph, partitions, SPD tables and harmonic basis");
  pp->add_option("--config", pre.config, "run config JSON");
  pp->add_option("--stations", pre.stations, "stations CSV");
  pp->add_option("--out-dir", pre.out_dir, "output directory");
  pp->add_flag("--dump-sh", pre.dump_sh, "write the spherical harmonic basis as CSV");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a forecaster and report test metrics");
  t->add_option("--config", tr.config, "run config JSON");
  t->add_option("--stations", tr.stations, "stations CSV");
  t->add_option("--series", tr.series, "series file");
  t->add_option("--out-dir", tr.out_dir, "output directory");
  t->add_option("--seed", tr.seed, "override the config seed");
  t->add_option("--epochs", tr.epochs, "override the epoch count");
  t->add_flag("--ablations", tr.ablations, "train the full model and the ablation variants");
  t->add_option("--variant", tr.variants, "restrict --ablations to these variants");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--checkpoint", ev.model.checkpoint, "checkpoint file")->required();
  e->add_option("--stations", ev.model.stations, "stations CSV")->required();
  e->add_option("--series", ev.model.series, "series file")->required();
  e->add_option("--split", ev.split, "train, val or test");
  e->add_option("--out", ev.out, "metrics JSON path (default stdout)");

  PredictArgs pr;
  auto* pd = app.add_subcommand("predict", "forecast the F steps after one input window");
  pd->add_option("--checkpoint", pr.model.checkpoint, "checkpoint file")->required();
  pd->add_option("--stations", pr.model.stations, "stations CSV")->required();
  pd->add_option("--series", pr.model.series, "series file")->required();
  pd->add_option("--start", pr.start, "first input timestep (default: last T steps)");
  pd->add_option("--out", pr.out, "CSV output path");

  ExportArgs ex;
  auto* xa = app.add_subcommand("export-attn", "export intra and inter attention maps");
  xa->add_option("--checkpoint", ex.model.checkpoint, "checkpoint file")->required();
  xa->add_option("--stations", ex.model.stations, "stations CSV")->required();
  xa->add_option("--series", ex.model.series, "series file")->required();
  xa->add_option("--start", ex.start, "first input timestep (default: last T steps)");
  xa->add_option("--out", ex.out, "JSON output path");

  ProbeArgs pb;
  auto* pr_cmd = app.add_subcommand("probe", "attention cost versus part count");
  pr_cmd->add_option("--n", pb.n, "station count");
  pr_cmd->add_option("--p-grid", pb.grid, "part counts")->delimiter(',');
  pr_cmd->add_option("--seed", pb.seed, "random seed");
  pr_cmd->add_option("--out", pb.out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*p) return cmd_partition(part, out);
    if (*pp) return cmd_preprocess(pre, out);
    if (*t) return cmd_train(tr, out, err);
    if (*e) return cmd_eval(ev, out);
    if (*pd) return cmd_predict(pr, out);
    if (*xa) return cmd_export_attn(ex, out);
    if (*pr_cmd) return cmd_probe(pb, out);
  } catch (const DataError& ex_) {
    err << "data error: " << ex_.what() << "\n";
    return kDataError;
  } catch (const NumericalError& ex_) {
    err << "numerical error: " << ex_.what() << "\n";
    return kNumericalError;
  } catch (const std::invalid_argument& ex_) {
    err << "usage error: " << ex_.what() << "\n";
    return kUsage;
  } catch (const std::exception& ex_) {
    err << "error: " << ex_.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace s2cast::cli
