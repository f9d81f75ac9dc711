#include "s2cast/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "seed.hpp"

namespace s2cast {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

std::int64_t capped_bound(std::int64_t target, double imbalance) {
  return static_cast<std::int64_t>(std::floor(static_cast<double>(target) * (1.0 + imbalance) + 1e-9));
}

// Subgraph induced by `nodes`; local vertex i is nodes[i].
WeightedGraph induced(const WeightedGraph& g, const std::vector<std::size_t>& nodes,
                      std::vector<std::size_t>& scratch) {
  for (std::size_t i = 0; i < nodes.size(); ++i) scratch[nodes[i]] = i;
  WeightedGraph out;
  out.offsets.assign(nodes.size() + 1, 0);
  out.vertex_weights.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto v = nodes[i];
    out.vertex_weights[i] = g.vertex_weights[v];
    for (auto e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
      const auto lu = scratch[g.targets[e]];
      if (lu == kNone) continue;
      out.targets.push_back(lu);
      out.edge_weights.push_back(g.edge_weights[e]);
    }
    out.offsets[i + 1] = out.targets.size();
  }
  for (auto v : nodes) scratch[v] = kNone;
  return out;
}

// Connectivity of v to every adjacent part; `touched` lists the parts with conn > 0
// plus v's own part.
struct ConnScratch {
  std::vector<std::int64_t> conn;
  std::vector<std::size_t> touched;

  explicit ConnScratch(std::size_t p) : conn(p, 0) {}

  void load(const WeightedGraph& g, const std::vector<std::size_t>& assign, std::size_t v) {
    clear();
    touched.push_back(assign[v]);
    for (auto e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
      const auto q = assign[g.targets[e]];
      if (conn[q] == 0 && q != assign[v]) touched.push_back(q);
      conn[q] += g.edge_weights[e];
    }
  }
  void clear() {
    for (auto q : touched) conn[q] = 0;
    touched.clear();
  }
};

std::int64_t edge_weight_between(const WeightedGraph& g, std::size_t u, std::size_t v) {
  for (auto e = g.offsets[u]; e < g.offsets[u + 1]; ++e) {
    if (g.targets[e] == v) return g.edge_weights[e];
  }
  return 0;
}

std::int64_t refine_impl(const WeightedGraph& g, std::vector<std::size_t>& assign, std::size_t p,
                         const std::vector<std::int64_t>& max_w,
                         const std::vector<std::size_t>& min_count, int max_passes) {
  const std::size_t n = g.size();
  if (p < 2 || n < 2) return 0;
  std::vector<std::int64_t> part_w(p, 0);
  std::vector<std::size_t> part_n(p, 0);
  for (std::size_t v = 0; v < n; ++v) {
    part_w[assign[v]] += g.vertex_weights[v];
    ++part_n[assign[v]];
  }
  ConnScratch cu(p);
  ConnScratch cv(p);
  std::int64_t total_gain = 0;

  for (int pass = 0; pass < max_passes; ++pass) {
    bool improved = false;

    for (std::size_t v = 0; v < n; ++v) {
      const auto a = assign[v];
      if (part_n[a] <= min_count[a]) continue;
      cu.load(g, assign, v);
      if (cu.touched.size() == 1) {
        cu.clear();
        continue;
      }
      const auto wv = g.vertex_weights[v];
      const auto internal = cu.conn[a];
      std::size_t best = kNone;
      std::int64_t best_gain = 0;
      for (auto q : cu.touched) {
        if (q == a || part_w[q] + wv > max_w[q]) continue;
        const auto gain = cu.conn[q] - internal;
        const bool ok = gain > 0 || (gain == 0 && part_w[q] + wv < part_w[a]);
        if (!ok) continue;
        if (best == kNone || gain > best_gain ||
            (gain == best_gain && (part_w[q] < part_w[best] ||
                                   (part_w[q] == part_w[best] && q < best)))) {
          best = q;
          best_gain = gain;
        }
      }
      cu.clear();
      if (best == kNone) continue;
      assign[v] = best;
      part_w[a] -= wv;
      part_w[best] += wv;
      --part_n[a];
      ++part_n[best];
      total_gain += best_gain;
      improved = true;
    }

    // Pairwise swaps make progress when single moves are blocked by the balance bound.
    for (std::size_t u = 0; u < n; ++u) {
      const auto a = assign[u];
      cu.load(g, assign, u);
      const auto wu = g.vertex_weights[u];
      std::size_t best_v = kNone;
      std::int64_t best_total = 0;
      for (auto b : cu.touched) {
        if (b == a) continue;
        const auto gu = cu.conn[b] - cu.conn[a];
        if (gu <= 0) continue;
        for (std::size_t v = 0; v < n; ++v) {
          if (assign[v] != b) continue;
          const auto wv = g.vertex_weights[v];
          if (part_w[a] - wu + wv > max_w[a] || part_w[b] - wv + wu > max_w[b]) continue;
          cv.load(g, assign, v);
          const auto gv = cv.conn[a] - cv.conn[b];
          cv.clear();
          const auto total = gu + gv - 2 * edge_weight_between(g, u, v);
          if (total > best_total || (total == best_total && total > 0 && v < best_v)) {
            best_total = total;
            best_v = v;
          }
        }
      }
      cu.clear();
      if (best_v == kNone) continue;
      const auto b = assign[best_v];
      const auto wv = g.vertex_weights[best_v];
      assign[u] = b;
      assign[best_v] = a;
      part_w[a] += wv - wu;
      part_w[b] += wu - wv;
      total_gain += best_total;
      improved = true;
    }

    if (!improved) break;
  }
  return total_gain;
}

// Greedy graph growing from `start`: absorbs the frontier vertex with the largest
// (left - right) connectivity until the left side reaches `target`.
std::vector<std::uint8_t> grow_region(const WeightedGraph& g, std::size_t start,
                                      std::int64_t target, std::size_t min_left,
                                      std::size_t max_left) {
  const std::size_t n = g.size();
  std::vector<std::uint8_t> left(n, 0);
  std::vector<std::int64_t> gain(n, 0);
  std::vector<std::uint8_t> on_frontier(n, 0);
  std::vector<std::size_t> frontier;
  for (std::size_t v = 0; v < n; ++v) {
    for (auto e = g.offsets[v]; e < g.offsets[v + 1]; ++e) gain[v] -= g.edge_weights[e];
  }
  std::int64_t left_w = 0;
  std::size_t left_n = 0;

  auto absorb = [&](std::size_t v) {
    left[v] = 1;
    left_w += g.vertex_weights[v];
    ++left_n;
    for (auto e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
      const auto u = g.targets[e];
      if (left[u]) continue;
      gain[u] += 2 * g.edge_weights[e];
      if (!on_frontier[u]) {
        on_frontier[u] = 1;
        frontier.push_back(u);
      }
    }
  };

  absorb(start);
  while (left_n < max_left) {
    if (left_n >= min_left && left_w >= target) break;
    std::size_t pick = kNone;
    std::size_t pick_slot = 0;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      const auto v = frontier[i];
      if (pick == kNone || gain[v] > gain[pick] || (gain[v] == gain[pick] && v < pick)) {
        pick = v;
        pick_slot = i;
      }
    }
    if (pick == kNone) {
      for (std::size_t v = 0; v < n; ++v) {
        if (!left[v]) {
          pick = v;
          break;
        }
      }
    } else {
      frontier[pick_slot] = frontier.back();
      frontier.pop_back();
      on_frontier[pick] = 0;
    }
    if (pick == kNone) break;
    if (left_n >= min_left) {
      const auto before = std::abs(target - left_w);
      const auto after = std::abs(target - left_w - g.vertex_weights[pick]);
      if (after > before) break;
    }
    absorb(pick);
  }
  return left;
}

void recursive_bisect(const WeightedGraph& g, const std::vector<std::size_t>& global_ids,
                      std::size_t p, std::size_t part_base, double imbalance,
                      std::mt19937_64& rng, std::vector<std::size_t>& out) {
  const std::size_t n = g.size();
  if (p == 1) {
    for (auto id : global_ids) out[id] = part_base;
    return;
  }
  const std::size_t p1 = p / 2;
  const std::size_t p2 = p - p1;
  const auto total = g.total_vertex_weight();
  const auto target = static_cast<std::int64_t>(std::llround(
      static_cast<double>(total) * static_cast<double>(p1) / static_cast<double>(p)));
  const std::vector<std::int64_t> max_w{std::max(capped_bound(target, imbalance), target),
                                        std::max(capped_bound(total - target, imbalance),
                                                 total - target)};
  const std::vector<std::size_t> min_count{p1, p2};

  constexpr int kTries = 4;
  std::vector<std::size_t> best;
  std::int64_t best_cut = std::numeric_limits<std::int64_t>::max();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (int t = 0; t < kTries; ++t) {
    const auto start = pick(rng);
    const auto left = grow_region(g, start, target, p1, n - p2);
    std::vector<std::size_t> assign(n);
    for (std::size_t v = 0; v < n; ++v) assign[v] = left[v] ? 0 : 1;
    refine_impl(g, assign, 2, max_w, min_count, 8);
    const auto cut = detail::weighted_cut(g, assign);
    if (cut < best_cut) {
      best_cut = cut;
      best = std::move(assign);
    }
  }

  std::vector<std::size_t> side_nodes[2];
  std::vector<std::size_t> side_ids[2];
  for (std::size_t v = 0; v < n; ++v) {
    side_nodes[best[v]].push_back(v);
    side_ids[best[v]].push_back(global_ids[v]);
  }
  std::vector<std::size_t> scratch(n, kNone);
  const auto g0 = induced(g, side_nodes[0], scratch);
  const auto g1 = induced(g, side_nodes[1], scratch);
  recursive_bisect(g0, side_ids[0], p1, part_base, imbalance, rng, out);
  recursive_bisect(g1, side_ids[1], p2, part_base + p1, imbalance, rng, out);
}

std::vector<std::size_t> multilevel_once(const WeightedGraph& g0, std::size_t p, double imbalance,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto total = g0.total_vertex_weight();
  const auto bound = static_cast<std::int64_t>(
      max_part_size_bound(static_cast<std::size_t>(total), p, imbalance));
  const std::size_t coarsen_to = std::max<std::size_t>(40, 15 * p);
  const auto cap = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(1.5 * static_cast<double>(total) / static_cast<double>(coarsen_to)));

  std::vector<CoarseLevel> levels;
  const WeightedGraph* current = &g0;
  while (current->size() > coarsen_to) {
    auto next = coarsen(*current, rng(), cap);
    if (static_cast<double>(next.graph.size()) > 0.95 * static_cast<double>(current->size())) break;
    levels.push_back(std::move(next));
    current = &levels.back().graph;
  }

  std::vector<std::size_t> assign(current->size(), 0);
  std::vector<std::size_t> ids(current->size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  recursive_bisect(*current, ids, p, 0, imbalance, rng, assign);

  const std::vector<std::int64_t> max_w(p, bound);
  const std::vector<std::size_t> min_count(p, 1);
  refine_impl(*current, assign, p, max_w, min_count, 8);
  for (std::size_t i = levels.size(); i-- > 0;) {
    const WeightedGraph& fine = i == 0 ? g0 : levels[i - 1].graph;
    std::vector<std::size_t> fine_assign(fine.size());
    for (std::size_t v = 0; v < fine.size(); ++v) {
      fine_assign[v] = assign[levels[i].fine_to_coarse[v]];
    }
    assign = std::move(fine_assign);
    refine_impl(fine, assign, p, max_w, min_count, 8);
  }
  detail::rebalance(g0, assign, p, bound);
  refine_impl(g0, assign, p, max_w, min_count, 16);
  return assign;
}

}  // namespace

Partition Partition::from_assignment(std::size_t p, std::vector<std::size_t> assignment) {
  Partition out;
  out.p = p;
  out.parts.assign(p, {});
  for (std::size_t v = 0; v < assignment.size(); ++v) {
    if (assignment[v] >= p) throw std::invalid_argument("part label out of range");
    out.parts[assignment[v]].push_back(v);
  }
  out.assignment = std::move(assignment);
  return out;
}

std::size_t Partition::max_part_size() const {
  std::size_t m = 0;
  for (const auto& part : parts) m = std::max(m, part.size());
  return m;
}

std::size_t max_part_size_bound(std::size_t n, std::size_t p, double imbalance) {
  if (p == 0) throw std::invalid_argument("part count must be positive");
  const std::size_t ideal = (n + p - 1) / p;
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(ideal) * (1.0 + imbalance) + 1e-9));
}

std::string partition_violation(const Partition& partition, std::size_t n, double imbalance) {
  if (partition.assignment.size() != n) return "assignment length differs from node count";
  if (partition.parts.size() != partition.p) return "part list length differs from p";
  std::vector<std::uint8_t> seen(n, 0);
  std::size_t covered = 0;
  for (std::size_t q = 0; q < partition.p; ++q) {
    const auto& part = partition.parts[q];
    if (part.empty()) return "part " + std::to_string(q) + " is empty";
    for (auto v : part) {
      if (v >= n) return "node index out of range";
      if (seen[v]) return "node " + std::to_string(v) + " appears in two parts";
      if (partition.assignment[v] != q) return "assignment disagrees with part lists";
      seen[v] = 1;
      ++covered;
    }
  }
  if (covered != n) return "parts do not cover every node";
  const auto bound = max_part_size_bound(n, partition.p, imbalance);
  if (partition.max_part_size() > bound) {
    return "part size " + std::to_string(partition.max_part_size()) + " exceeds bound " +
           std::to_string(bound);
  }
  return {};
}

std::size_t edge_cut(const SpatialGraph& graph, const Partition& partition) {
  std::size_t cut = 0;
  for (auto [a, b] : graph.edges()) {
    if (partition.assignment[a] != partition.assignment[b]) ++cut;
  }
  return cut;
}

Partition partition_graph(const SpatialGraph& graph, std::size_t p, double imbalance,
                          std::uint64_t seed) {
  const std::size_t n = graph.size();
  if (n == 0) throw std::invalid_argument("cannot partition an empty graph");
  if (p < 1) throw std::invalid_argument("part count must be >= 1");
  if (p > n) {
    throw std::invalid_argument("infeasible partition: p = " + std::to_string(p) +
                                " exceeds node count " + std::to_string(n));
  }
  if (!(imbalance >= 0.0)) throw std::invalid_argument("imbalance must be >= 0");
  if (p == 1) return Partition::from_assignment(1, std::vector<std::size_t>(n, 0));
  if (p == n) {
    std::vector<std::size_t> identity(n);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    return Partition::from_assignment(p, std::move(identity));
  }

  const auto g0 = WeightedGraph::from_spatial(graph);
  constexpr int kTrials = 4;
  std::vector<std::size_t> best;
  std::int64_t best_cut = std::numeric_limits<std::int64_t>::max();
  for (int t = 0; t < kTrials; ++t) {
    auto assign = multilevel_once(g0, p, imbalance, detail::derive_seed(seed, static_cast<std::uint64_t>(t)));
    const auto cut = detail::weighted_cut(g0, assign);
    if (cut < best_cut) {
      best_cut = cut;
      best = std::move(assign);
    }
  }
  return Partition::from_assignment(p, std::move(best));
}

Partition refine(const SpatialGraph& graph, const Partition& partition, double imbalance) {
  if (partition.p <= 1) return partition;
  const auto g = WeightedGraph::from_spatial(graph);
  auto assign = partition.assignment;
  const auto bound = static_cast<std::int64_t>(
      max_part_size_bound(graph.size(), partition.p, imbalance));
  detail::refine_kway(g, assign, partition.p, bound, 16);
  return Partition::from_assignment(partition.p, std::move(assign));
}

Partition random_balanced_partition(std::size_t n, std::size_t p, std::uint64_t seed) {
  if (p < 1 || p > n) throw std::invalid_argument("random partition requires 1 <= p <= n");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> assign(n);
  for (std::size_t i = 0; i < n; ++i) assign[order[i]] = i % p;
  return Partition::from_assignment(p, std::move(assign));
}

namespace detail {

std::int64_t refine_kway(const WeightedGraph& graph, std::vector<std::size_t>& assignment,
                         std::size_t p, std::int64_t max_part_weight, int max_passes) {
  return refine_impl(graph, assignment, p, std::vector<std::int64_t>(p, max_part_weight),
                     std::vector<std::size_t>(p, 1), max_passes);
}

void rebalance(const WeightedGraph& g, std::vector<std::size_t>& assign, std::size_t p,
               std::int64_t max_w) {
  const std::size_t n = g.size();
  std::vector<std::int64_t> part_w(p, 0);
  std::vector<std::size_t> part_n(p, 0);
  for (std::size_t v = 0; v < n; ++v) {
    part_w[assign[v]] += g.vertex_weights[v];
    ++part_n[assign[v]];
  }
  ConnScratch cs(p);

  auto move = [&](std::size_t v, std::size_t to) {
    const auto from = assign[v];
    part_w[from] -= g.vertex_weights[v];
    --part_n[from];
    part_w[to] += g.vertex_weights[v];
    ++part_n[to];
    assign[v] = to;
  };

  for (std::size_t q = 0; q < p; ++q) {
    if (part_n[q] != 0) continue;
    std::size_t donor = kNone;
    for (std::size_t r = 0; r < p; ++r) {
      if (part_n[r] > 1 && (donor == kNone || part_w[r] > part_w[donor])) donor = r;
    }
    if (donor == kNone) break;
    std::size_t pick = kNone;
    std::int64_t pick_loss = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (assign[v] != donor) continue;
      cs.load(g, assign, v);
      const auto loss = cs.conn[donor];
      cs.clear();
      if (pick == kNone || loss < pick_loss) {
        pick = v;
        pick_loss = loss;
      }
    }
    move(pick, q);
  }

  while (true) {
    std::size_t heavy = kNone;
    for (std::size_t q = 0; q < p; ++q) {
      if (part_w[q] > max_w && (heavy == kNone || part_w[q] > part_w[heavy])) heavy = q;
    }
    if (heavy == kNone || part_n[heavy] <= 1) break;
    std::size_t pick = kNone;
    std::size_t pick_to = kNone;
    std::int64_t pick_gain = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (assign[v] != heavy) continue;
      cs.load(g, assign, v);
      const auto wv = g.vertex_weights[v];
      for (std::size_t q = 0; q < p; ++q) {
        if (q == heavy || part_w[q] + wv > max_w) continue;
        const auto gain = cs.conn[q] - cs.conn[heavy];
        if (pick == kNone || gain > pick_gain ||
            (gain == pick_gain && part_w[q] < part_w[pick_to])) {
          pick = v;
          pick_to = q;
          pick_gain = gain;
        }
      }
      cs.clear();
    }
    if (pick == kNone) break;
    move(pick, pick_to);
  }
}

std::int64_t weighted_cut(const WeightedGraph& g, const std::vector<std::size_t>& assignment) {
  std::int64_t cut = 0;
  for (std::size_t v = 0; v < g.size(); ++v) {
    for (auto e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
      if (assignment[v] != assignment[g.targets[e]]) cut += g.edge_weights[e];
    }
  }
  return cut / 2;
}

}  // namespace detail

}  // namespace s2cast
