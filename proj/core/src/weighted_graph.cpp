#include "s2cast/weighted_graph.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace s2cast {

std::int64_t WeightedGraph::total_vertex_weight() const {
  return std::accumulate(vertex_weights.begin(), vertex_weights.end(), std::int64_t{0});
}

std::int64_t WeightedGraph::total_edge_weight() const {
  return std::accumulate(edge_weights.begin(), edge_weights.end(), std::int64_t{0}) / 2;
}

WeightedGraph WeightedGraph::from_spatial(const SpatialGraph& g) {
  WeightedGraph w;
  const auto n = g.size();
  w.offsets.assign(n + 1, 0);
  w.vertex_weights.assign(n, 1);
  for (std::size_t v = 0; v < n; ++v) {
    for (auto u : g.neighbors(v)) {
      w.targets.push_back(u);
      w.edge_weights.push_back(1);
    }
    w.offsets[v + 1] = w.targets.size();
  }
  return w;
}

CoarseLevel coarsen(const WeightedGraph& graph, std::uint64_t seed,
                    std::int64_t max_vertex_weight) {
  const std::size_t n = graph.size();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> match(n, kNone);
  for (auto v : order) {
    if (match[v] != kNone) continue;
    std::size_t best = kNone;
    std::int64_t best_w = 0;
    for (auto e = graph.offsets[v]; e < graph.offsets[v + 1]; ++e) {
      const auto u = graph.targets[e];
      if (u == v || match[u] != kNone) continue;
      if (graph.vertex_weights[v] + graph.vertex_weights[u] > max_vertex_weight) continue;
      const auto w = graph.edge_weights[e];
      if (best == kNone || w > best_w || (w == best_w && u < best)) {
        best = u;
        best_w = w;
      }
    }
    if (best != kNone) {
      match[v] = best;
      match[best] = v;
    } else {
      match[v] = v;
    }
  }

  // Coarse ids follow the lowest fine index of each matched pair.
  CoarseLevel out;
  out.fine_to_coarse.assign(n, kNone);
  std::size_t next = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (out.fine_to_coarse[v] != kNone) continue;
    out.fine_to_coarse[v] = next;
    out.fine_to_coarse[match[v]] = next;
    ++next;
  }

  auto& cg = out.graph;
  cg.vertex_weights.assign(next, 0);
  for (std::size_t v = 0; v < n; ++v) {
    cg.vertex_weights[out.fine_to_coarse[v]] += graph.vertex_weights[v];
  }

  std::vector<std::vector<std::size_t>> members(next);
  for (std::size_t v = 0; v < n; ++v) members[out.fine_to_coarse[v]].push_back(v);

  cg.offsets.assign(next + 1, 0);
  std::vector<std::int64_t> accum(next, 0);
  std::vector<std::size_t> touched;
  for (std::size_t c = 0; c < next; ++c) {
    touched.clear();
    for (auto v : members[c]) {
      for (auto e = graph.offsets[v]; e < graph.offsets[v + 1]; ++e) {
        const auto cu = out.fine_to_coarse[graph.targets[e]];
        if (cu == c) continue;
        if (accum[cu] == 0) touched.push_back(cu);
        accum[cu] += graph.edge_weights[e];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (auto cu : touched) {
      cg.targets.push_back(cu);
      cg.edge_weights.push_back(accum[cu]);
      accum[cu] = 0;
    }
    cg.offsets[c + 1] = cg.targets.size();
  }
  return out;
}

CoarseLevel coarsen(const SpatialGraph& graph, std::uint64_t seed) {
  if (graph.size() < 2) throw std::invalid_argument("coarsen requires at least two nodes");
  return coarsen(WeightedGraph::from_spatial(graph), seed,
                 std::numeric_limits<std::int64_t>::max());
}

}  // namespace s2cast
