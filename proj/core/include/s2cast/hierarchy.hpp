#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "s2cast/partition.hpp"
#include "s2cast/spatial_graph.hpp"

namespace s2cast {

/// Padded block layout of N nodes into P rows of M slots. Slot (q, j) holds
/// partition.parts[q][j]; trailing slots of short parts are padding.
struct Layout {
  std::size_t p = 0;
  std::size_t m = 0;
  std::vector<std::size_t> perm;          // node order grouped by part
  std::vector<std::uint8_t> pad_mask;     // p * m, 1 = real node
  std::vector<std::int64_t> slot_to_node; // p * m, -1 = padding
  std::vector<std::size_t> node_to_slot;  // n

  std::size_t node_count() const { return node_to_slot.size(); }
};

Layout make_layout(const Partition& partition);

/// N x D -> P x M x D, padded slots zero-filled.
std::vector<double> apply_layout(std::span<const double> values, std::size_t d,
                                 const Layout& layout);
/// P x M x D -> N x D, padded slots dropped.
std::vector<double> invert_layout(std::span<const double> blocks, std::size_t d,
                                  const Layout& layout);

/// Hop distances between parts on the quotient graph (parts adjacent iff a cross edge
/// exists), -1 when unreachable.
SpdTable coarse_spd(const Partition& partition, const SpatialGraph& graph);

enum class PartitionMethod { kMultilevel, kRandom };

struct HierarchyLevel {
  Partition partition;
  Layout layout;
  std::vector<SpdTable> intra;  // one table per part, ordered as layout slots
  SpdTable coarse;
};

/// Nested multiscale partitions; level l + 1 merges the parts of level l in pairs.
struct PartitionHierarchy {
  std::vector<HierarchyLevel> levels;

  std::size_t level_count() const { return levels.size(); }
  std::size_t node_count() const {
    return levels.empty() ? 0 : levels.front().partition.node_count();
  }
};

/// Level 1 partitions the graph into p0 parts; each further level pairs up the parts of
/// the previous one by partitioning its quotient graph (cross-edge counts as weights)
/// into half as many groups of two, so part counts halve and levels nest exactly.
/// When a pairing would exceed the coarser balance bound, single nodes move between
/// finest-level parts (respecting every level's bound) until all levels are balanced.
/// kRandom swaps in random balanced partitions and random pairings.
PartitionHierarchy build_hierarchy(const SpatialGraph& graph, std::size_t p0, std::size_t levels,
                                   double imbalance = kDefaultImbalance, std::uint64_t seed = 0,
                                   PartitionMethod method = PartitionMethod::kMultilevel);

/// Groups the parts of `fine` into fine.p / 2 pairs, maximizing the cross-edge weight
/// kept inside pairs subject to the balance bound. Returns pair id per fine part.
std::vector<std::size_t> pair_parts(const SpatialGraph& graph, const Partition& fine,
                                    double imbalance, std::uint64_t seed, bool random_pairs);

}  // namespace s2cast
