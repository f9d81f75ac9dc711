#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "s2cast/geo.hpp"

namespace s2cast {

/// Legendre polynomial P_l(x) by Bonnet's recurrence. Throws for |x| > 1 or l < 0.
double legendre(int l, double x);

/// Associated Legendre function P_l^m(x), 0 <= m <= l, Condon-Shortley phase included.
double assoc_legendre(int l, int m, double x);

/// P_l^m for -l <= m <= l via P_l^{-m} = (-1)^m (l-m)!/(l+m)! P_l^m.
double assoc_legendre_signed(int l, int m, double x);

/// sqrt((2l+1)/(4 pi) * (l-|m|)!/(l+|m|)!) * P_l^|m|(x), evaluated by a normalized
/// recurrence so no factorial is ever formed.
double normalized_assoc_legendre(int l, int m, double x);

/// Real spherical harmonic at polar angle `colat_rad` in [0, pi] and azimuth `lon_rad`:
///   m < 0: (-1)^m sqrt(2) Pbar_l^|m|(cos colat) sin(|m| lon)
///   m = 0: Pbar_l^0(cos colat)
///   m > 0: (-1)^m sqrt(2) Pbar_l^m(cos colat) cos(m lon)
double real_sph_harm(int l, int m, double colat_rad, double lon_rad);

/// Column of (l, m) in a basis row: l^2 + l + m.
constexpr std::size_t harmonic_index(int l, int m) {
  return static_cast<std::size_t>(l * l + l + m);
}
constexpr std::size_t harmonic_count(int l_max) {
  return static_cast<std::size_t>((l_max + 1) * (l_max + 1));
}

/// The single latitude/longitude to (polar angle, azimuth) conversion point.
double colatitude_rad(const GeoCoord& c);
double longitude_rad(const GeoCoord& c);

/// All (l_max + 1)^2 real harmonics at every station, row-major N x K, column order
/// (l, m) lexicographic with m from -l to l.
class HarmonicBasis {
 public:
  HarmonicBasis() = default;
  HarmonicBasis(int l_max, std::size_t rows, std::vector<double> values);

  int l_max() const { return l_max_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return harmonic_count(l_max_); }
  double operator()(std::size_t row, std::size_t col) const { return values_[row * cols() + col]; }
  const std::vector<double>& values() const { return values_; }

 private:
  int l_max_ = 0;
  std::size_t rows_ = 0;
  std::vector<double> values_;
};

HarmonicBasis build_basis(const StationSet& stations, int l_max);

/// Every basis row multiplied element-wise by `weights` (one scalar per (l, m)).
std::vector<double> encode_locations(const HarmonicBasis& basis, std::span<const double> weights);

}  // namespace s2cast
