#include "s2cast/geo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "s2cast/error.hpp"

namespace s2cast {

namespace {

double to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& field, std::size_t line_no) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw DataError("stations csv line " + std::to_string(line_no) + ": cannot parse number '" +
                    field + "'");
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void validate(const GeoCoord& c) {
  if (!std::isfinite(c.lat_deg) || !std::isfinite(c.lon_deg)) {
    throw std::invalid_argument("coordinate must be finite");
  }
  if (c.lat_deg < -90.0 || c.lat_deg > 90.0) {
    throw std::invalid_argument("latitude out of range: " + std::to_string(c.lat_deg));
  }
  if (c.lon_deg <= -180.0 || c.lon_deg > 180.0) {
    throw std::invalid_argument("longitude out of range: " + std::to_string(c.lon_deg));
  }
}

double haversine_km(const GeoCoord& a, const GeoCoord& b) {
  const double phi1 = to_rad(a.lat_deg);
  const double phi2 = to_rad(b.lat_deg);
  const double dphi = phi2 - phi1;
  const double dlambda = to_rad(b.lon_deg - a.lon_deg);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

StationSet::StationSet(std::vector<std::string> ids, std::vector<GeoCoord> coords)
    : ids_(std::move(ids)), coords_(std::move(coords)) {
  if (ids_.empty()) throw std::invalid_argument("station set must not be empty");
  if (ids_.size() != coords_.size()) {
    throw std::invalid_argument("station ids and coordinates differ in length");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) throw std::invalid_argument("duplicate station id: " + id);
  }
  for (const auto& c : coords_) validate(c);
}

StationSet StationSet::permuted(const std::vector<std::size_t>& order) const {
  std::vector<std::string> ids;
  std::vector<GeoCoord> coords;
  ids.reserve(order.size());
  coords.reserve(order.size());
  for (auto i : order) {
    ids.push_back(ids_.at(i));
    coords.push_back(coords_.at(i));
  }
  return StationSet(std::move(ids), std::move(coords));
}

StationSet read_stations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stations file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("stations file is empty: " + path);
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  if (trim(line) != "id,lat,lon") {
    throw DataError("stations file header must be 'id,lat,lon', got '" + trim(line) + "'");
  }
  std::vector<std::string> ids;
  std::vector<GeoCoord> coords;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (fields.size() != 3) {
      throw DataError("stations csv line " + std::to_string(line_no) + ": expected 3 fields");
    }
    GeoCoord c{parse_double(fields[1], line_no), parse_double(fields[2], line_no)};
    try {
      validate(c);
    } catch (const std::invalid_argument& e) {
      throw DataError("stations csv line " + std::to_string(line_no) + ": " + e.what());
    }
    ids.push_back(fields[0]);
    coords.push_back(c);
  }
  try {
    return StationSet(std::move(ids), std::move(coords));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("stations file ") + path + ": " + e.what());
  }
}

void write_stations_csv(const std::string& path, const StationSet& stations) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write stations file: " + path);
  out << "id,lat,lon\n";
  for (std::size_t i = 0; i < stations.size(); ++i) {
    out << stations.ids()[i] << ',' << format_double(stations.coords()[i].lat_deg) << ','
        << format_double(stations.coords()[i].lon_deg) << '\n';
  }
}

}  // namespace s2cast
