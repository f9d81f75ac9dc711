#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace s2cast {

inline constexpr double kEarthRadiusKm = 6371.0;

struct GeoCoord {
  double lat_deg = 0.0;  // [-90, 90]
  double lon_deg = 0.0;  // (-180, 180]
};

/// Throws std::invalid_argument when the coordinate is non-finite or out of range.
void validate(const GeoCoord& c);

/// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoCoord& a, const GeoCoord& b);

/// Stations with unique ids and one coordinate each.
class StationSet {
 public:
  StationSet() = default;
  StationSet(std::vector<std::string> ids, std::vector<GeoCoord> coords);

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<GeoCoord>& coords() const { return coords_; }
  const GeoCoord& coord(std::size_t i) const { return coords_.at(i); }

  /// Subset/reordering: station i of the result is station order[i] of this set.
  StationSet permuted(const std::vector<std::size_t>& order) const;

 private:
  std::vector<std::string> ids_;
  std::vector<GeoCoord> coords_;
};

/// Reads a `id,lat,lon` CSV. Throws DataError on malformed rows or duplicate ids.
StationSet read_stations_csv(const std::string& path);
void write_stations_csv(const std::string& path, const StationSet& stations);

}  // namespace s2cast
