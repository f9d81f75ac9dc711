#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "s2cast/geo.hpp"

namespace s2cast {

/// Undirected, unweighted station graph. Neighbor lists are sorted ascending.
class SpatialGraph {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;  // first < second

  explicit SpatialGraph(std::size_t n = 0) : adj_(n) {}

  /// Builds from an edge list; duplicates collapse, self-loops are rejected.
  static SpatialGraph from_edges(std::size_t n, const std::vector<Edge>& edges);

  std::size_t size() const { return adj_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  std::size_t degree(std::size_t v) const { return adj_.at(v).size(); }
  std::span<const std::size_t> neighbors(std::size_t v) const { return adj_.at(v); }
  bool has_edge(std::size_t a, std::size_t b) const;

  /// Sorted list of (i, j) with i < j.
  std::vector<Edge> edges() const;

 private:
  std::vector<std::vector<std::size_t>> adj_;
  std::size_t edge_count_ = 0;
};

/// Edge (i, j) iff i != j and haversine distance < epsilon_km.
SpatialGraph build_spatial_graph(const StationSet& stations, double epsilon_km);

/// Convenience threshold: the q-quantile (q in [0, 1]) of every station's distance to its
/// k-th nearest neighbor. Not derived from any published setting.
double epsilon_from_knn_quantile(const StationSet& stations, std::size_t k, double q);

/// Hop-count table over an ordered node subset; -1 marks unreachable pairs.
class SpdTable {
 public:
  static constexpr std::int32_t kUnreachable = -1;

  SpdTable() = default;
  explicit SpdTable(std::size_t k) : k_(k), data_(k * k, kUnreachable) {
    for (std::size_t i = 0; i < k; ++i) data_[i * k + i] = 0;
  }

  std::size_t size() const { return k_; }
  std::int32_t operator()(std::size_t i, std::size_t j) const { return data_[i * k_ + j]; }
  std::int32_t& at(std::size_t i, std::size_t j) { return data_[i * k_ + j]; }
  const std::vector<std::int32_t>& data() const { return data_; }

  friend bool operator==(const SpdTable&, const SpdTable&) = default;

 private:
  std::size_t k_ = 0;
  std::vector<std::int32_t> data_;
};

/// BFS hop distances within the subgraph induced by `subset`; entry (i, j) refers to
/// subset[i] and subset[j]. Throws std::invalid_argument on duplicates or bad indices.
SpdTable spd_table(const SpatialGraph& graph, std::span<const std::size_t> subset);

/// Same as spd_table over every node.
SpdTable spd_table(const SpatialGraph& graph);

}  // namespace s2cast
