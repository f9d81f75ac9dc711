#include "s2cast/spherical_harmonics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace s2cast {

namespace {

void check_argument(int l, double x) {
  if (l < 0) throw std::invalid_argument("degree must be non-negative");
  if (!(std::abs(x) <= 1.0)) {
    throw std::invalid_argument("Legendre argument outside [-1, 1]: " + std::to_string(x));
  }
}

void check_order(int l, int m) {
  if (m < 0 || m > l) {
    throw std::invalid_argument("order m = " + std::to_string(m) + " outside [0, " +
                                std::to_string(l) + "]");
  }
}

double sin_from_cos(double x) { return std::sqrt(std::max(0.0, (1.0 - x) * (1.0 + x))); }

}  // namespace

double legendre(int l, double x) {
  check_argument(l, x);
  if (l == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int k = 1; k < l; ++k) {
    const double next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

double assoc_legendre(int l, int m, double x) {
  check_argument(l, x);
  check_order(l, m);
  const double s = sin_from_cos(x);
  double pmm = 1.0;
  for (int k = 1; k <= m; ++k) pmm *= -(2.0 * k - 1.0) * s;
  if (l == m) return pmm;
  double pm1 = x * (2.0 * m + 1.0) * pmm;
  if (l == m + 1) return pm1;
  double pl = 0.0;
  for (int k = m + 2; k <= l; ++k) {
    pl = ((2.0 * k - 1.0) * x * pm1 - (k + m - 1.0) * pmm) / (k - m);
    pmm = pm1;
    pm1 = pl;
  }
  return pl;
}

double assoc_legendre_signed(int l, int m, double x) {
  if (m >= 0) return assoc_legendre(l, m, x);
  const int am = -m;
  check_order(l, am);
  // (l - am)! / (l + am)! as a running product.
  double ratio = 1.0;
  for (int k = l - am + 1; k <= l + am; ++k) ratio /= k;
  const double sign = (am % 2 == 0) ? 1.0 : -1.0;
  return sign * ratio * assoc_legendre(l, am, x);
}

double normalized_assoc_legendre(int l, int m, double x) {
  check_argument(l, x);
  const int am = std::abs(m);
  check_order(l, am);
  const double s = sin_from_cos(x);
  double pmm = std::sqrt(1.0 / (4.0 * std::numbers::pi));
  for (int k = 1; k <= am; ++k) pmm *= -std::sqrt((2.0 * k + 1.0) / (2.0 * k)) * s;
  if (l == am) return pmm;
  double pm1 = x * std::sqrt(2.0 * am + 3.0) * pmm;
  if (l == am + 1) return pm1;
  double pl = 0.0;
  for (int k = am + 2; k <= l; ++k) {
    const double kk = static_cast<double>(k);
    const double mm = static_cast<double>(am);
    const double a = std::sqrt((4.0 * kk * kk - 1.0) / (kk * kk - mm * mm));
    const double b = std::sqrt(((kk - 1.0) * (kk - 1.0) - mm * mm) /
                               (4.0 * (kk - 1.0) * (kk - 1.0) - 1.0));
    pl = a * (x * pm1 - b * pmm);
    pmm = pm1;
    pm1 = pl;
  }
  return pl;
}

double real_sph_harm(int l, int m, double colat_rad, double lon_rad) {
  if (!(colat_rad >= 0.0 && colat_rad <= std::numbers::pi)) {
    throw std::invalid_argument("colatitude outside [0, pi]");
  }
  const double x = std::clamp(std::cos(colat_rad), -1.0, 1.0);
  const int am = std::abs(m);
  const double pbar = normalized_assoc_legendre(l, am, x);
  if (m == 0) return pbar;
  const double sign = (am % 2 == 0) ? 1.0 : -1.0;
  const double trig = m < 0 ? std::sin(am * lon_rad) : std::cos(am * lon_rad);
  return sign * std::numbers::sqrt2 * pbar * trig;
}

double colatitude_rad(const GeoCoord& c) {
  return std::clamp(std::numbers::pi / 2.0 - c.lat_deg * std::numbers::pi / 180.0, 0.0,
                    std::numbers::pi);
}

double longitude_rad(const GeoCoord& c) { return c.lon_deg * std::numbers::pi / 180.0; }

HarmonicBasis::HarmonicBasis(int l_max, std::size_t rows, std::vector<double> values)
    : l_max_(l_max), rows_(rows), values_(std::move(values)) {
  if (l_max < 0) throw std::invalid_argument("l_max must be non-negative");
  if (values_.size() != rows_ * cols()) throw std::invalid_argument("basis value count mismatch");
}

HarmonicBasis build_basis(const StationSet& stations, int l_max) {
  if (l_max < 0) throw std::invalid_argument("l_max must be non-negative");
  const std::size_t k = harmonic_count(l_max);
  std::vector<double> values(stations.size() * k);
  for (std::size_t n = 0; n < stations.size(); ++n) {
    const double colat = colatitude_rad(stations.coord(n));
    const double lon = longitude_rad(stations.coord(n));
    for (int l = 0; l <= l_max; ++l) {
      for (int m = -l; m <= l; ++m) {
        values[n * k + harmonic_index(l, m)] = real_sph_harm(l, m, colat, lon);
      }
    }
  }
  return HarmonicBasis(l_max, stations.size(), std::move(values));
}

std::vector<double> encode_locations(const HarmonicBasis& basis, std::span<const double> weights) {
  if (weights.size() != basis.cols()) {
    throw std::invalid_argument("encoder weight length " + std::to_string(weights.size()) +
                                " does not match basis width " + std::to_string(basis.cols()));
  }
  std::vector<double> out(basis.values().size());
  const std::size_t k = basis.cols();
  for (std::size_t r = 0; r < basis.rows(); ++r) {
    for (std::size_t c = 0; c < k; ++c) out[r * k + c] = basis(r, c) * weights[c];
  }
  return out;
}

}  // namespace s2cast
