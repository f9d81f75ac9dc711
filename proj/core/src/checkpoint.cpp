#include "s2cast/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "s2cast/error.hpp"

namespace s2cast {

namespace {

using json = nlohmann::json;

constexpr const char* kFormat = "s2cast-checkpoint";
constexpr int kVersion = 1;

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  os.write(bytes, 8);
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainConfig& config,
                     const Normalizer& normalizer, const Forecaster& model,
                     const CheckpointInfo& info) {
  json params = json::array();
  for (const auto& p : model.params()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  }
  json header = {{"format", kFormat},
                 {"version", kVersion},
                 {"seed", config.seed},
                 {"config", json::parse(to_json(config))},
                 {"normalizer", {{"mean", normalizer.mean}, {"std", normalizer.std}}},
                 {"best_epoch", info.best_epoch},
                 {"best_val_mae", info.best_val_mae},
                 {"params", params}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << header.dump() << '\n';
  for (const auto& p : model.params()) {
    for (auto v : p.value.values()) put_f64(os, static_cast<double>(v));
  }
  if (!os) throw DataError("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": missing checkpoint header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed checkpoint header: " + e.what());
  }
  if (header.value("format", std::string()) != kFormat || header.value("version", 0) != kVersion) {
    throw DataError(path + ": not an s2cast checkpoint (version " + std::to_string(kVersion) + ")");
  }

  TrainConfig config;
  Normalizer normalizer;
  CheckpointInfo info;
  json params;
  try {
    config = parse_train_config(header.at("config").dump());
    normalizer.mean = header.at("normalizer").at("mean").get<std::vector<double>>();
    normalizer.std = header.at("normalizer").at("std").get<std::vector<double>>();
    info.best_epoch = header.at("best_epoch").get<std::size_t>();
    info.best_val_mae = header.at("best_val_mae").get<double>();
    params = header.at("params");
  } catch (const json::exception& e) {
    throw DataError(path + ": bad checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path + ": bad config in checkpoint: " + e.what());
  }

  Forecaster model(config.model, config.seed);
  if (params.size() != model.params().size()) {
    throw DataError(path + ": checkpoint lists " + std::to_string(params.size()) +
                    " parameters, model declares " + std::to_string(model.params().size()));
  }
  const std::vector<unsigned char> payload((std::istreambuf_iterator<char>(is)),
                                           std::istreambuf_iterator<char>());
  if (payload.size() != model.params().scalar_count() * 8) {
    throw DataError(path + ": payload has " + std::to_string(payload.size()) + " bytes, expected " +
                    std::to_string(model.params().scalar_count() * 8));
  }
  std::size_t offset = 0;
  std::size_t k = 0;
  for (auto& p : model.params()) {
    const auto& entry = params[k++];
    if (entry.value("name", std::string()) != p.name ||
        entry.value("shape", nn::Shape()) != p.value.shape()) {
      throw DataError(path + ": parameter " + std::to_string(k - 1) + " is " +
                      entry.dump() + ", model expects " + p.name + " " +
                      nn::to_string(p.value.shape()));
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      p.value[i] = static_cast<nn::Real>(get_f64(payload.data() + offset));
      offset += 8;
    }
  }
  return {config, normalizer, info, std::move(model)};
}

}  // namespace s2cast
