#include "s2cast/dataset.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "s2cast/error.hpp"

namespace s2cast {

namespace {

using json = nlohmann::json;

std::string id_list(const std::vector<std::string>& ids) {
  constexpr std::size_t kShown = 20;
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size() && i < kShown; ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  if (ids.size() > kShown) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out + "]";
}

void put_f32(std::ostream& os, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff),
                         static_cast<char>((bits >> 24) & 0xff)};
  os.write(bytes, 4);
}

float get_f32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

void Dataset::validate() const {
  if (channels.empty()) throw DataError("dataset has no channels");
  if (series.size() != t_total * n() * c()) {
    throw DataError("series holds " + std::to_string(series.size()) + " values, expected " +
                    std::to_string(t_total) + " x " + std::to_string(n()) + " x " +
                    std::to_string(c()));
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (!std::isfinite(series[k])) {
      const std::size_t ch = k % c();
      const std::size_t i = (k / c()) % n();
      const std::size_t t = k / (c() * n());
      throw DataError("non-finite value at t=" + std::to_string(t) + ", station " +
                      stations.ids()[i] + ", channel " + channels[ch] +
                      " (missing values must be filled before loading)");
    }
  }
}

void write_series(const std::string& path, const Dataset& dataset) {
  dataset.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  json header = {{"n", dataset.n()},
                 {"t_total", dataset.t_total},
                 {"c", dataset.c()},
                 {"channels", dataset.channels},
                 {"station_ids", dataset.stations.ids()},
                 {"interval", dataset.interval}};
  os << header.dump() << '\n';
  for (float v : dataset.series) put_f32(os, v);
  if (!os) throw DataError("write failed: " + path);
}

Dataset read_series(const std::string& path, const StationSet& stations) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open series file " + path);
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ": missing header line");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed header: " + e.what());
  }

  Dataset ds;
  std::size_t n = 0;
  std::size_t c = 0;
  std::vector<std::string> ids;
  try {
    n = header.at("n").get<std::size_t>();
    ds.t_total = header.at("t_total").get<std::size_t>();
    c = header.at("c").get<std::size_t>();
    ds.channels = header.at("channels").get<std::vector<std::string>>();
    ids = header.at("station_ids").get<std::vector<std::string>>();
    ds.interval = header.value("interval", std::string("1h"));
  } catch (const json::exception& e) {
    throw DataError(path + ": bad header field: " + e.what());
  }
  if (ids.size() != n) throw DataError(path + ": header lists " + std::to_string(ids.size()) +
                                       " station ids but n = " + std::to_string(n));
  if (ds.channels.size() != c) throw DataError(path + ": channel names do not match c");
  if (ids != stations.ids()) {
    throw DataError("station ids differ between stations file " + id_list(stations.ids()) +
                    " and series header " + id_list(ids));
  }
  ds.stations = stations;

  const std::vector<unsigned char> payload((std::istreambuf_iterator<char>(is)),
                                           std::istreambuf_iterator<char>());
  const std::size_t expected = ds.t_total * n * c;
  if (payload.size() != expected * 4) {
    throw DataError(path + ": payload has " + std::to_string(payload.size()) +
                    " bytes, expected " + std::to_string(expected * 4) +
                    " (ragged or truncated rows)");
  }
  ds.series.resize(expected);
  for (std::size_t k = 0; k < expected; ++k) ds.series[k] = get_f32(payload.data() + 4 * k);
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::string& stations_csv, const std::string& series_path) {
  return read_series(series_path, read_stations_csv(stations_csv));
}

void save_dataset(const std::string& stations_csv, const std::string& series_path,
                  const Dataset& dataset) {
  write_stations_csv(stations_csv, dataset.stations);
  write_series(series_path, dataset);
}

void SplitSpec::validate() const {
  if (!(train > 0.0) || !(val > 0.0) || !(test > 0.0)) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

TimeSpan split_span(std::size_t t_total, const SplitSpec& spec, Split split) {
  spec.validate();
  const auto a = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(t_total)));
  const auto b = static_cast<std::size_t>(
      std::floor((spec.train + spec.val) * static_cast<double>(t_total)));
  switch (split) {
    case Split::kTrain: return {0, a};
    case Split::kVal: return {a, b};
    case Split::kTest: return {b, t_total};
  }
  return {};
}

Normalizer fit_normalizer(const Dataset& dataset, const SplitSpec& split) {
  const TimeSpan span = split_span(dataset.t_total, split, Split::kTrain);
  if (span.length() == 0) throw DataError("training span is empty");
  const std::size_t n = dataset.n();
  const std::size_t c = dataset.c();
  const double count = static_cast<double>(span.length() * n);
  Normalizer norm;
  norm.mean.assign(c, 0.0);
  norm.std.assign(c, 0.0);
  for (std::size_t t = span.begin; t < span.end; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) norm.mean[ch] += dataset.value(t, i, ch);
    }
  }
  for (auto& m : norm.mean) m /= count;
  for (std::size_t t = span.begin; t < span.end; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = dataset.value(t, i, ch) - norm.mean[ch];
        norm.std[ch] += d * d;
      }
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    norm.std[ch] = std::sqrt(norm.std[ch] / count);
    if (!(norm.std[ch] > 0.0)) {
      throw DataError("channel " + dataset.channels[ch] + " is constant over the training span");
    }
  }
  return norm;
}

std::vector<double> normalize_series(const Dataset& dataset, const Normalizer& normalizer) {
  const std::size_t c = dataset.c();
  std::vector<double> out(dataset.series.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = normalizer.apply(dataset.series[k], k % c);
  }
  return out;
}

std::vector<std::size_t> window_starts(const TimeSpan& span, std::size_t input_steps,
                                       std::size_t horizon, std::size_t stride) {
  if (stride == 0) throw ConfigError("window stride must be positive");
  const std::size_t need = input_steps + horizon;
  if (span.length() < need) {
    throw DataError("span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
                    ") is shorter than T + F = " + std::to_string(need));
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = span.begin; s + need <= span.end; s += stride) starts.push_back(s);
  return starts;
}

WindowBatch make_batch(const std::vector<double>& series, std::size_t n, std::size_t c,
                       const std::vector<std::size_t>& starts, std::size_t input_steps,
                       std::size_t horizon) {
  const std::size_t b = starts.size();
  WindowBatch batch{nn::Tensor({b, n, input_steps, c}), nn::Tensor({b, n, horizon, c})};
  const std::size_t frame = n * c;
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t s = starts[k];
    if ((s + input_steps + horizon) * frame > series.size()) {
      throw std::invalid_argument("make_batch: window beyond the end of the series");
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < input_steps; ++t) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          batch.input[((k * n + i) * input_steps + t) * c + ch] =
              static_cast<nn::Real>(series[(s + t) * frame + i * c + ch]);
        }
      }
      for (std::size_t t = 0; t < horizon; ++t) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          batch.target[((k * n + i) * horizon + t) * c + ch] =
              static_cast<nn::Real>(series[(s + input_steps + t) * frame + i * c + ch]);
        }
      }
    }
  }
  return batch;
}

}  // namespace s2cast
