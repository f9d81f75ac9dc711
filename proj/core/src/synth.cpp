#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "s2cast/dataset.hpp"
#include "s2cast/error.hpp"
#include "seed.hpp"

namespace s2cast {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 unit_vector(double lat_deg, double lon_deg) {
  const double lat = lat_deg * std::numbers::pi / 180.0;
  const double lon = lon_deg * std::numbers::pi / 180.0;
  return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

GeoCoord to_coord(const Vec3& u) {
  GeoCoord c;
  c.lat_deg = std::asin(std::clamp(u[2], -1.0, 1.0)) * 180.0 / std::numbers::pi;
  c.lon_deg = std::atan2(u[1], u[0]) * 180.0 / std::numbers::pi;
  if (c.lon_deg <= -180.0) c.lon_deg += 360.0;
  return c;
}

// Uniform sample on the cap of angular radius `alpha` around `center`.
std::vector<GeoCoord> sample_cap(std::size_t n, const GeoCoord& center, double alpha,
                                 std::mt19937_64& rng) {
  const Vec3 z = unit_vector(center.lat_deg, center.lon_deg);
  // Orthonormal frame (east, north, z) at the center.
  const double lon = center.lon_deg * std::numbers::pi / 180.0;
  const double lat = center.lat_deg * std::numbers::pi / 180.0;
  const Vec3 east = {-std::sin(lon), std::cos(lon), 0.0};
  const Vec3 north = {-std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon),
                      std::cos(lat)};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double cmin = std::cos(alpha);
  std::vector<GeoCoord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ct = 1.0 - unit(rng) * (1.0 - cmin);
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    const double az = 2.0 * std::numbers::pi * unit(rng);
    Vec3 u;
    for (int k = 0; k < 3; ++k) {
      u[k] = ct * z[k] + st * (std::cos(az) * east[k] + std::sin(az) * north[k]);
    }
    out.push_back(to_coord(u));
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (n < 2) throw ConfigError("synth: n must be >= 2");
  if (steps == 0) throw ConfigError("synth: steps must be positive");
  if (channels == 0) throw ConfigError("synth: channels must be positive");
  if (!(length_scale_km > 0.0)) throw ConfigError("synth: length scale must be positive");
  if (!(noise >= 0.0)) throw ConfigError("synth: noise must be non-negative");
  if (!(cap_radius_km > 0.0) || cap_radius_km > std::numbers::pi * kEarthRadiusKm) {
    throw ConfigError("synth: cap radius out of range");
  }
  if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0)) {
    throw ConfigError("synth: AR coefficient must lie in [0, 1)");
  }
  if (features == 0) throw ConfigError("synth: features must be positive");
  try {
    s2cast::validate(GeoCoord{center_lat, center_lon});
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("synth: center: ") + e.what());
  }
}

Dataset synth_generate(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.n;
  const std::size_t steps = config.steps;
  const std::size_t c = config.channels;
  const std::size_t k_count = config.features;

  std::mt19937_64 station_rng(detail::derive_seed(config.seed, 1));
  const GeoCoord center{config.center_lat, config.center_lon};
  auto coords = sample_cap(n, center, config.cap_radius_km / kEarthRadiusKm, station_rng);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "S%05zu", i);
    ids[i] = buf;
  }

  std::vector<Vec3> pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 u = unit_vector(coords[i].lat_deg, coords[i].lon_deg);
    for (int d = 0; d < 3; ++d) pos[i][d] = kEarthRadiusKm * u[d];
  }
  const double lon0 = config.center_lon * std::numbers::pi / 180.0;
  const Vec3 east = {-std::sin(lon0), std::cos(lon0), 0.0};

  Dataset ds;
  ds.stations = StationSet(ids, coords);
  ds.t_total = steps;
  ds.interval = "1h";
  for (std::size_t ch = 0; ch < c; ++ch) ds.channels.push_back("var" + std::to_string(ch));
  ds.series.assign(steps * n * c, 0.0f);

  std::mt19937_64 feature_rng(detail::derive_seed(config.seed, 2));
  std::mt19937_64 ar_rng(detail::derive_seed(config.seed, 3));
  std::mt19937_64 noise_rng(detail::derive_seed(config.seed, 4));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  const double inv_l = 1.0 / config.length_scale_km;
  const double feature_scale = config.field_amplitude * std::sqrt(2.0 / static_cast<double>(k_count));
  const double rho = config.ar_coefficient;
  const double innovation = std::sqrt(1.0 - rho * rho);

  std::vector<double> value(steps * n, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::fill(value.begin(), value.end(), 0.0);
    const double diurnal_phase = phase(feature_rng);

    // Random Fourier features of the squared-exponential kernel on chordal coordinates.
    std::vector<double> proj(n * k_count);  // omega_k . x_i + b_k
    std::vector<double> drift(k_count);     // omega_k . east * speed
    for (std::size_t k = 0; k < k_count; ++k) {
      Vec3 omega;
      for (int d = 0; d < 3; ++d) omega[d] = gauss(feature_rng) * inv_l;
      const double b = phase(feature_rng);
      for (std::size_t i = 0; i < n; ++i) proj[i * k_count + k] = dot(omega, pos[i]) + b;
      drift[k] = dot(omega, east) * config.advection_kmh;
    }

    std::vector<double> amp(k_count);
    for (auto& a : amp) a = gauss(ar_rng);
    for (std::size_t t = 0; t < steps; ++t) {
      if (t > 0) {
        for (auto& a : amp) a = rho * a + innovation * gauss(ar_rng);
      }
      const double tt = static_cast<double>(t);
      for (std::size_t i = 0; i < n; ++i) {
        double f = 0.0;
        const double* pr = &proj[i * k_count];
        for (std::size_t k = 0; k < k_count; ++k) f += amp[k] * std::cos(pr[k] - drift[k] * tt);
        value[t * n + i] = feature_scale * f;
      }
    }

    for (std::size_t t = 0; t < steps; ++t) {
      const double tt = static_cast<double>(t);
      const double diurnal =
          config.diurnal_amplitude * std::sin(2.0 * std::numbers::pi * tt / 24.0 + diurnal_phase);
      for (std::size_t i = 0; i < n; ++i) {
        const double dlat = coords[i].lat_deg - config.center_lat;
        const double trend = config.lat_offset_per_deg * dlat +
                             config.lat_drift_per_deg * dlat * tt / static_cast<double>(steps);
        const double v = diurnal + trend + value[t * n + i] + config.noise * gauss(noise_rng);
        ds.series[(t * n + i) * c + ch] = static_cast<float>(v);
      }
    }
  }
  return ds;
}

}  // namespace s2cast
