#include "s2cast/spatial_graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace s2cast {

SpatialGraph SpatialGraph::from_edges(std::size_t n, const std::vector<Edge>& edges) {
  SpatialGraph g(n);
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) throw std::invalid_argument("edge endpoint out of range");
    if (a == b) throw std::invalid_argument("self-loops are not allowed");
    g.adj_[a].push_back(b);
    g.adj_[b].push_back(a);
  }
  std::size_t twice = 0;
  for (auto& list : g.adj_) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    twice += list.size();
  }
  g.edge_count_ = twice / 2;
  return g;
}

bool SpatialGraph::has_edge(std::size_t a, std::size_t b) const {
  const auto& list = adj_.at(a);
  return std::binary_search(list.begin(), list.end(), b);
}

std::vector<SpatialGraph::Edge> SpatialGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count_);
  for (std::size_t a = 0; a < adj_.size(); ++a) {
    for (auto b : adj_[a]) {
      if (a < b) out.emplace_back(a, b);
    }
  }
  return out;
}

SpatialGraph build_spatial_graph(const StationSet& stations, double epsilon_km) {
  if (stations.size() == 0) throw std::invalid_argument("cannot build a graph over zero stations");
  if (!(epsilon_km >= 0.0)) throw std::invalid_argument("epsilon_km must be >= 0");
  const std::size_t n = stations.size();
  std::vector<SpatialGraph::Edge> edges;
  const auto& coords = stations.coords();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (haversine_km(coords[i], coords[j]) < epsilon_km) edges.emplace_back(i, j);
    }
  }
  return SpatialGraph::from_edges(n, edges);
}

double epsilon_from_knn_quantile(const StationSet& stations, std::size_t k, double q) {
  const std::size_t n = stations.size();
  if (n < 2) throw std::invalid_argument("need at least two stations");
  if (k < 1 || k >= n) throw std::invalid_argument("k must be in [1, n-1]");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("q must be in [0, 1]");
  std::vector<double> kth(n);
  std::vector<double> row(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row[c++] = haversine_km(stations.coord(i), stations.coord(j));
    }
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    kth[i] = row[k - 1];
  }
  std::sort(kth.begin(), kth.end());
  // Linear interpolation between order statistics.
  const double pos = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return kth[lo] + frac * (kth[hi] - kth[lo]);
}

SpdTable spd_table(const SpatialGraph& graph, std::span<const std::size_t> subset) {
  const std::size_t k = subset.size();
  constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> local(graph.size(), kAbsent);
  for (std::size_t i = 0; i < k; ++i) {
    const auto v = subset[i];
    if (v >= graph.size()) throw std::invalid_argument("subset index out of range");
    if (local[v] != kAbsent) {
      throw std::invalid_argument("duplicate subset entry: " + std::to_string(v));
    }
    local[v] = i;
  }
  SpdTable table(k);
  std::vector<std::size_t> queue(k);
  for (std::size_t src = 0; src < k; ++src) {
    std::size_t head = 0;
    std::size_t tail = 0;
    queue[tail++] = src;
    while (head < tail) {
      const auto u = queue[head++];
      const auto du = table(src, u);
      for (auto w : graph.neighbors(subset[u])) {
        const auto lw = local[w];
        if (lw == kAbsent || table(src, lw) != SpdTable::kUnreachable) continue;
        table.at(src, lw) = du + 1;
        queue[tail++] = lw;
      }
    }
  }
  return table;
}

SpdTable spd_table(const SpatialGraph& graph) {
  std::vector<std::size_t> all(graph.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return spd_table(graph, all);
}

}  // namespace s2cast
