#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "s2cast/geo.hpp"
#include "s2cast/tensor.hpp"

namespace s2cast {

/// Station observations, stored time-major: value(t, i, c) = series[(t * n + i) * c_count + c].
struct Dataset {
  StationSet stations;
  std::size_t t_total = 0;
  std::vector<std::string> channels;
  std::string interval = "1h";
  std::vector<float> series;

  std::size_t n() const { return stations.size(); }
  std::size_t c() const { return channels.size(); }
  float value(std::size_t t, std::size_t i, std::size_t ch) const {
    return series[(t * n() + i) * c() + ch];
  }
  /// Throws DataError on size mismatch or non-finite values.
  void validate() const;
};

/// Binary series file: one JSON header line, then float32 little-endian rows.
void write_series(const std::string& path, const Dataset& dataset);
/// Reads a series file and checks its station ids against `stations` (same ids, same order).
Dataset read_series(const std::string& path, const StationSet& stations);

Dataset load_dataset(const std::string& stations_csv, const std::string& series_path);
void save_dataset(const std::string& stations_csv, const std::string& series_path,
                  const Dataset& dataset);

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  /// Throws ConfigError unless all fractions are positive and sum to 1.
  void validate() const;
};

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split split);
Split parse_split(const std::string& name);

/// Half-open timestep range [begin, end).
struct TimeSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - begin; }
};

/// Boundaries at floor(train * T) and floor((train + val) * T).
TimeSpan split_span(std::size_t t_total, const SplitSpec& spec, Split split);

/// Per-channel z-score statistics.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;

  double apply(double x, std::size_t ch) const { return (x - mean[ch]) / std[ch]; }
  double invert(double z, std::size_t ch) const { return z * std[ch] + mean[ch]; }
};

/// Mean and population standard deviation over the training span only (two passes).
/// Throws DataError for a constant channel.
Normalizer fit_normalizer(const Dataset& dataset, const SplitSpec& split);

/// Z-scored copy of the whole series in double precision, same layout as Dataset::series.
std::vector<double> normalize_series(const Dataset& dataset, const Normalizer& normalizer);

/// Start indices of windows inside `span`: input [s, s + T), target [s + T, s + T + F).
/// Count is span - T - F + 1 for stride 1. Throws DataError when the span is too short.
std::vector<std::size_t> window_starts(const TimeSpan& span, std::size_t input_steps,
                                       std::size_t horizon, std::size_t stride = 1);

struct WindowBatch {
  nn::Tensor input;   // [B, N, T, C]
  nn::Tensor target;  // [B, N, F, C]
};

/// Gathers windows from a time-major series (n stations, c channels).
WindowBatch make_batch(const std::vector<double>& series, std::size_t n, std::size_t c,
                       const std::vector<std::size_t>& starts, std::size_t input_steps,
                       std::size_t horizon);

struct SynthConfig {
  std::size_t n = 200;
  std::size_t steps = 5000;
  std::uint64_t seed = 0;
  double length_scale_km = 200.0;  // correlation length of the stochastic field
  double noise = 0.3;              // white-noise standard deviation
  std::size_t channels = 1;
  double center_lat = 45.0;
  double center_lon = 10.0;
  double cap_radius_km = 1500.0;
  double diurnal_amplitude = 1.0;
  double field_amplitude = 1.0;
  double ar_coefficient = 0.97;     // per-step AR(1) coefficient of the field
  double advection_kmh = 60.0;      // eastward drift speed of the field pattern
  std::size_t features = 128;       // random Fourier features
  double lat_offset_per_deg = 0.1;  // latitude-dependent level
  double lat_drift_per_deg = 0.05;  // latitude-dependent drift over the whole record

  void validate() const;
};

/// Desk-scale synthetic dataset: stations uniform on a spherical cap; each series is a
/// shared diurnal harmonic, a latitude-dependent offset and drift, a spatially correlated
/// AR(1) field and white noise. Field covariance decays with distance as
/// exp(-d^2 / (2 l^2)) (chordal d). Deterministic per seed.
Dataset synth_generate(const SynthConfig& config);

}  // namespace s2cast
