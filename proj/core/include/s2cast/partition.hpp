#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "s2cast/spatial_graph.hpp"
#include "s2cast/weighted_graph.hpp"

namespace s2cast {

inline constexpr double kDefaultImbalance = 0.03;

/// Disjoint cover of [0, n) by p non-empty parts. `parts[i]` is sorted ascending.
struct Partition {
  std::size_t p = 0;
  std::vector<std::size_t> assignment;
  std::vector<std::vector<std::size_t>> parts;

  /// Builds `parts` from an assignment vector. Throws if a label is >= p.
  static Partition from_assignment(std::size_t p, std::vector<std::size_t> assignment);

  std::size_t node_count() const { return assignment.size(); }
  std::size_t max_part_size() const;

  friend bool operator==(const Partition& a, const Partition& b) {
    return a.p == b.p && a.assignment == b.assignment;
  }
};

/// Largest admissible part size: floor(ceil(n / p) * (1 + imbalance)).
std::size_t max_part_size_bound(std::size_t n, std::size_t p, double imbalance);

/// Empty string when every partition invariant holds, otherwise a description of the
/// first violation found.
std::string partition_violation(const Partition& partition, std::size_t n, double imbalance);

std::size_t edge_cut(const SpatialGraph& graph, const Partition& partition);

/// Multilevel k-way partition: heavy-edge coarsening, recursive graph-growing
/// bisection on the coarsest graph, then k-way boundary refinement while projecting back.
/// Deterministic given (graph, p, imbalance, seed).
Partition partition_graph(const SpatialGraph& graph, std::size_t p,
                          double imbalance = kDefaultImbalance, std::uint64_t seed = 0);

/// Boundary refinement: greedy single-vertex moves, then pairwise swaps, each accepted
/// only when the edge cut does not increase and every part stays within the bound.
Partition refine(const SpatialGraph& graph, const Partition& partition,
                 double imbalance = kDefaultImbalance);

/// Shuffled round-robin assignment; part sizes differ by at most one.
Partition random_balanced_partition(std::size_t n, std::size_t p, std::uint64_t seed);

namespace detail {

/// In-place k-way refinement on a weighted graph; returns the total cut reduction.
std::int64_t refine_kway(const WeightedGraph& graph, std::vector<std::size_t>& assignment,
                         std::size_t p, std::int64_t max_part_weight, int max_passes);

/// Moves vertices until no part exceeds max_part_weight and no part is empty, picking
/// the cheapest moves first. May increase the cut.
void rebalance(const WeightedGraph& graph, std::vector<std::size_t>& assignment, std::size_t p,
               std::int64_t max_part_weight);

std::int64_t weighted_cut(const WeightedGraph& graph, const std::vector<std::size_t>& assignment);

}  // namespace detail

}  // namespace s2cast
