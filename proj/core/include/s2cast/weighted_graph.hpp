#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "s2cast/spatial_graph.hpp"

namespace s2cast {

/// CSR graph with integer vertex and edge weights; the working representation of the
/// multilevel partitioner. Every undirected edge appears in both endpoint lists.
struct WeightedGraph {
  std::vector<std::size_t> offsets{0};  // size n + 1
  std::vector<std::size_t> targets;
  std::vector<std::int64_t> edge_weights;
  std::vector<std::int64_t> vertex_weights;

  std::size_t size() const { return vertex_weights.size(); }
  std::size_t degree(std::size_t v) const { return offsets[v + 1] - offsets[v]; }
  std::int64_t total_vertex_weight() const;
  /// Sum of edge weights, each undirected edge counted once.
  std::int64_t total_edge_weight() const;

  static WeightedGraph from_spatial(const SpatialGraph& g);
};

/// Result of one contraction step.
struct CoarseLevel {
  WeightedGraph graph;
  std::vector<std::size_t> fine_to_coarse;
};

/// Heavy-edge maximal matching followed by contraction. Vertices are visited in a
/// seed-shuffled order; each picks its unmatched neighbor with the heaviest connecting
/// edge (ties to the lowest index) provided the merged weight stays <= max_vertex_weight.
/// Parallel edges created by contraction are merged with summed weight.
CoarseLevel coarsen(const WeightedGraph& graph, std::uint64_t seed,
                    std::int64_t max_vertex_weight);
CoarseLevel coarsen(const SpatialGraph& graph, std::uint64_t seed = 0);

}  // namespace s2cast
