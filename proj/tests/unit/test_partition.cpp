#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "s2cast/hierarchy.hpp"
#include "s2cast/partition.hpp"
#include "s2cast/weighted_graph.hpp"

namespace s2cast {
namespace {

SpatialGraph geometric_graph(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto coords = testing::random_coords(n, rng);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
  const StationSet stations(ids, coords);
  return build_spatial_graph(stations, epsilon_from_knn_quantile(stations, 6, 0.5));
}

SpatialGraph two_cliques() {
  std::vector<SpatialGraph::Edge> edges;
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = a + 1; b < 5; ++b) {
      edges.emplace_back(a, b);
      edges.emplace_back(a + 5, b + 5);
    }
  }
  edges.emplace_back(4, 5);
  return SpatialGraph::from_edges(10, edges);
}

TEST(PartitionBound, CeilTimesTolerance) {
  EXPECT_EQ(max_part_size_bound(200, 8, 0.03), 25u);
  EXPECT_EQ(max_part_size_bound(200, 32, 0.03), 7u);
  EXPECT_EQ(max_part_size_bound(100, 3, 0.1), 37u);
}

TEST(PartitionViolation, DetectsEachInvariant) {
  const auto ok = Partition::from_assignment(2, {0, 1, 0, 1});
  EXPECT_EQ(partition_violation(ok, 4, 0.0), "");
  const auto empty_part = Partition::from_assignment(3, {0, 1, 0, 1});
  EXPECT_NE(partition_violation(empty_part, 4, 0.0), "");
  const auto heavy = Partition::from_assignment(2, {0, 0, 0, 1});
  EXPECT_NE(partition_violation(heavy, 4, 0.0), "");
  EXPECT_NE(partition_violation(ok, 5, 0.0), "");
  EXPECT_THROW(Partition::from_assignment(2, {0, 2}), std::invalid_argument);
}

TEST(PartitionGraph, TwoCliquesSplitAtTheBridge) {
  const auto g = two_cliques();
  const auto part = partition_graph(g, 2, 0.0, 1);
  EXPECT_EQ(partition_violation(part, 10, 0.0), "");
  EXPECT_EQ(edge_cut(g, part), 1u);
  EXPECT_EQ(edge_cut(g, part), testing::exhaustive_bisection_cut(g));
}

TEST(PartitionGraph, MatchesExhaustiveBisectionOnSmallGraphs) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = testing::random_graph(14, 0.3, rng);
    const auto part = partition_graph(g, 2, 0.0, trial);
    ASSERT_EQ(partition_violation(part, 14, 0.0), "");
    // Heuristic: allowed to miss the optimum by a small margin on dense random graphs.
    EXPECT_LE(edge_cut(g, part), testing::exhaustive_bisection_cut(g) + 2) << trial;
  }
}

TEST(PartitionGraph, InvariantsAndDeterminism) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = geometric_graph(200, 100 + seed);
    for (std::size_t p : {2u, 5u, 8u, 16u, 33u}) {
      const auto a = partition_graph(g, p, 0.03, seed);
      const auto b = partition_graph(g, p, 0.03, seed);
      EXPECT_EQ(partition_violation(a, 200, 0.03), "") << "p=" << p;
      EXPECT_EQ(a, b);
    }
  }
}

TEST(PartitionGraph, BeatsRandomBalancedPartitions) {
  double ours = 0.0;
  double rand = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = geometric_graph(200, seed);
    ours += static_cast<double>(edge_cut(g, partition_graph(g, 8, 0.03, seed)));
    rand += static_cast<double>(edge_cut(g, random_balanced_partition(200, 8, seed)));
  }
  EXPECT_LT(ours, rand);
}

TEST(PartitionGraph, EdgeCases) {
  const auto g = geometric_graph(30, 4);
  const auto single = partition_graph(g, 1, 0.03, 0);
  EXPECT_EQ(edge_cut(g, single), 0u);
  const auto singletons = partition_graph(g, 30, 0.0, 0);
  EXPECT_EQ(partition_violation(singletons, 30, 0.0), "");
  EXPECT_EQ(edge_cut(g, singletons), g.edge_count());
  EXPECT_THROW(partition_graph(g, 31, 0.03, 0), std::invalid_argument);
  EXPECT_THROW(partition_graph(g, 0, 0.03, 0), std::invalid_argument);
  // Graph without edges still partitions into balanced parts.
  const SpatialGraph empty(12);
  EXPECT_EQ(partition_violation(partition_graph(empty, 4, 0.0, 0), 12, 0.0), "");
}

TEST(RandomBalancedPartition, SizesDifferByAtMostOne) {
  const auto part = random_balanced_partition(103, 10, 9);
  std::size_t lo = 1000, hi = 0;
  for (const auto& p : part.parts) {
    lo = std::min(lo, p.size());
    hi = std::max(hi, p.size());
  }
  EXPECT_LE(hi - lo, 1u);
  EXPECT_EQ(part, random_balanced_partition(103, 10, 9));
}

TEST(Refine, CutNeverIncreasesAndBalanceHolds) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = geometric_graph(150, 50 + seed);
    const auto start = random_balanced_partition(150, 6, seed);
    const auto out = refine(g, start, 0.03);
    EXPECT_LE(edge_cut(g, out), edge_cut(g, start));
    EXPECT_EQ(partition_violation(out, 150, 0.03), "");
  }
}

TEST(Coarsen, PreservesVertexWeightAndCountsContractedEdges) {
  const auto g = geometric_graph(120, 8);
  const auto level = coarsen(g, 3);
  const auto fine = WeightedGraph::from_spatial(g);
  EXPECT_EQ(level.graph.total_vertex_weight(), fine.total_vertex_weight());
  EXPECT_LT(level.graph.size(), fine.size());
  // Edge weight lost equals the number of fine edges inside a coarse vertex.
  std::int64_t internal = 0;
  for (const auto& [a, b] : g.edges()) internal += level.fine_to_coarse[a] == level.fine_to_coarse[b];
  EXPECT_EQ(level.graph.total_edge_weight() + internal, fine.total_edge_weight());
  // Matching: at most two fine vertices per coarse vertex.
  std::vector<int> count(level.graph.size(), 0);
  for (auto c : level.fine_to_coarse) ++count[c];
  for (int c : count) EXPECT_LE(c, 2);
}

TEST(Hierarchy, NestingBalanceAndCounts) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto g = geometric_graph(200, 200 + seed);
    for (auto method : {PartitionMethod::kMultilevel, PartitionMethod::kRandom}) {
      const auto h = build_hierarchy(g, 32, 3, 0.03, seed, method);
      ASSERT_EQ(h.level_count(), 3u);
      for (std::size_t l = 0; l < 3; ++l) {
        const auto& part = h.levels[l].partition;
        EXPECT_EQ(part.p, 32u >> l);
        EXPECT_EQ(partition_violation(part, 200, 0.03), "") << "level " << l;
      }
      for (std::size_t l = 1; l < 3; ++l) {
        const auto& fine = h.levels[l - 1].partition;
        const auto& coarse = h.levels[l].partition;
        for (const auto& cpart : coarse.parts) {
          std::set<std::size_t> members;
          for (auto v : cpart) members.insert(fine.assignment[v]);
          ASSERT_EQ(members.size(), 2u);
          std::set<std::size_t> union_nodes;
          for (auto q : members) union_nodes.insert(fine.parts[q].begin(), fine.parts[q].end());
          EXPECT_EQ(union_nodes, std::set<std::size_t>(cpart.begin(), cpart.end()));
        }
      }
      EXPECT_EQ(h.levels[0].partition, build_hierarchy(g, 32, 3, 0.03, seed, method).levels[0].partition);
    }
  }
}

TEST(Hierarchy, InvalidLevelCombinationsRejected) {
  const auto g = geometric_graph(60, 1);
  EXPECT_THROW(build_hierarchy(g, 12, 4, 0.03, 0), std::invalid_argument);
  EXPECT_THROW(build_hierarchy(g, 64, 1, 0.03, 0), std::invalid_argument);
  EXPECT_THROW(build_hierarchy(g, 8, 0, 0.03, 0), std::invalid_argument);
}

TEST(Hierarchy, IntraTablesFollowLayoutOrder) {
  const auto g = geometric_graph(100, 5);
  const auto h = build_hierarchy(g, 8, 2, 0.03, 1);
  for (const auto& level : h.levels) {
    for (std::size_t q = 0; q < level.partition.p; ++q) {
      const auto& part = level.partition.parts[q];
      const auto fw = testing::floyd_warshall(part.size(), testing::induced_adjacency(g, part));
      EXPECT_EQ(level.intra[q].data(), fw);
    }
  }
}

TEST(Layout, ApplyInvertRoundTripIsExact) {
  const auto g = geometric_graph(97, 6);
  const auto part = partition_graph(g, 7, 0.03, 2);
  const auto layout = make_layout(part);
  const std::size_t d = 3;
  std::vector<double> x(97 * d);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (auto& v : x) v = nd(rng);
  const auto blocks = apply_layout(x, d, layout);
  EXPECT_EQ(blocks.size(), layout.p * layout.m * d);
  EXPECT_EQ(invert_layout(blocks, d, layout), x);
  for (std::size_t s = 0; s < layout.p * layout.m; ++s) {
    if (layout.pad_mask[s]) continue;
    for (std::size_t k = 0; k < d; ++k) EXPECT_EQ(blocks[s * d + k], 0.0);
  }
  std::vector<std::size_t> perm = layout.perm;
  std::sort(perm.begin(), perm.end());
  std::vector<std::size_t> iota(97);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(perm, iota);
  // M = N, P = 1 layout is the identity up to part order.
  const auto one = make_layout(Partition::from_assignment(1, std::vector<std::size_t>(5, 0)));
  EXPECT_EQ(one.m, 5u);
  EXPECT_EQ(std::count(one.pad_mask.begin(), one.pad_mask.end(), 1), 5);
}

TEST(CoarseSpd, DisconnectedComponentsUseSentinel) {
  // Two separate triangles, four parts: parts in different triangles are unreachable.
  const auto g = SpatialGraph::from_edges(
      6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}});
  const auto part = Partition::from_assignment(4, {0, 0, 1, 2, 2, 3});
  const auto t = coarse_spd(part, g);
  EXPECT_EQ(t(0, 1), 1);
  EXPECT_EQ(t(2, 3), 1);
  EXPECT_EQ(t(0, 2), SpdTable::kUnreachable);
  EXPECT_EQ(t(1, 3), SpdTable::kUnreachable);
}

}  // namespace
}  // namespace s2cast
