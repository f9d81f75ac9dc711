#include "s2cast/hierarchy.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "seed.hpp"

namespace s2cast {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

// Sparse symmetric quotient weights: row q holds sorted (r, cross-edge count).
struct Quotient {
  std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> rows;

  std::int64_t weight(std::size_t a, std::size_t b) const {
    const auto& row = rows[a];
    auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(b, std::int64_t{0}),
                               [](const auto& x, const auto& y) { return x.first < y.first; });
    return it != row.end() && it->first == b ? it->second : 0;
  }
};

Quotient make_quotient(const SpatialGraph& graph, const Partition& partition) {
  Quotient q;
  q.rows.resize(partition.p);
  std::vector<std::int64_t> accum(partition.p, 0);
  std::vector<std::size_t> touched;
  for (std::size_t a = 0; a < partition.p; ++a) {
    touched.clear();
    for (auto v : partition.parts[a]) {
      for (auto u : graph.neighbors(v)) {
        const auto b = partition.assignment[u];
        if (b == a) continue;
        if (accum[b] == 0) touched.push_back(b);
        ++accum[b];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (auto b : touched) {
      q.rows[a].emplace_back(b, accum[b]);
      accum[b] = 0;
    }
  }
  return q;
}

using Pair = std::pair<std::size_t, std::size_t>;

std::vector<Pair> sorted_size_pairing(const std::vector<std::size_t>& members,
                                      const std::vector<std::size_t>& sizes) {
  auto order = members;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sizes[a] < sizes[b]; });
  std::vector<Pair> out;
  for (std::size_t i = 0, j = order.size(); i + 1 < j; ++i, --j) {
    out.emplace_back(order[i], order[j - 1]);
  }
  return out;
}

}  // namespace

Layout make_layout(const Partition& partition) {
  Layout layout;
  layout.p = partition.p;
  layout.m = partition.max_part_size();
  const std::size_t n = partition.node_count();
  layout.pad_mask.assign(layout.p * layout.m, 0);
  layout.slot_to_node.assign(layout.p * layout.m, -1);
  layout.node_to_slot.assign(n, 0);
  layout.perm.reserve(n);
  for (std::size_t q = 0; q < layout.p; ++q) {
    const auto& part = partition.parts[q];
    for (std::size_t j = 0; j < part.size(); ++j) {
      const auto slot = q * layout.m + j;
      layout.pad_mask[slot] = 1;
      layout.slot_to_node[slot] = static_cast<std::int64_t>(part[j]);
      layout.node_to_slot[part[j]] = slot;
      layout.perm.push_back(part[j]);
    }
  }
  return layout;
}

std::vector<double> apply_layout(std::span<const double> values, std::size_t d,
                                 const Layout& layout) {
  if (values.size() != layout.node_count() * d) {
    throw std::invalid_argument("apply_layout: expected " + std::to_string(layout.node_count()) +
                                " x " + std::to_string(d) + " values");
  }
  std::vector<double> out(layout.p * layout.m * d, 0.0);
  for (std::size_t s = 0; s < layout.slot_to_node.size(); ++s) {
    const auto node = layout.slot_to_node[s];
    if (node < 0) continue;
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(node) * static_cast<std::ptrdiff_t>(d), d,
                out.begin() + static_cast<std::ptrdiff_t>(s * d));
  }
  return out;
}

std::vector<double> invert_layout(std::span<const double> blocks, std::size_t d,
                                  const Layout& layout) {
  if (blocks.size() != layout.p * layout.m * d) {
    throw std::invalid_argument("invert_layout: expected " + std::to_string(layout.p) + " x " +
                                std::to_string(layout.m) + " x " + std::to_string(d) + " values");
  }
  std::vector<double> out(layout.node_count() * d);
  for (std::size_t v = 0; v < layout.node_count(); ++v) {
    std::copy_n(blocks.begin() + static_cast<std::ptrdiff_t>(layout.node_to_slot[v] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(v * d));
  }
  return out;
}

SpdTable coarse_spd(const Partition& partition, const SpatialGraph& graph) {
  const auto q = make_quotient(graph, partition);
  std::vector<SpatialGraph::Edge> edges;
  for (std::size_t a = 0; a < partition.p; ++a) {
    for (const auto& [b, w] : q.rows[a]) {
      if (a < b) edges.emplace_back(a, b);
    }
  }
  return spd_table(SpatialGraph::from_edges(partition.p, edges));
}

std::vector<std::size_t> pair_parts(const SpatialGraph& graph, const Partition& fine,
                                    double imbalance, std::uint64_t seed, bool random_pairs) {
  const std::size_t p = fine.p;
  if (p % 2 != 0) throw std::invalid_argument("pair_parts requires an even part count");
  const auto quotient = make_quotient(graph, fine);
  std::vector<std::size_t> sizes(p);
  for (std::size_t q = 0; q < p; ++q) sizes[q] = fine.parts[q].size();
  const auto bound = max_part_size_bound(fine.node_count(), p / 2, imbalance);
  auto fits = [&](std::size_t a, std::size_t b) { return sizes[a] + sizes[b] <= bound; };

  std::vector<Pair> pairs;
  std::vector<std::size_t> mate(p, kNone);
  if (random_pairs) {
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < p; i += 2) pairs.emplace_back(order[i], order[i + 1]);
  } else {
    struct Candidate {
      std::int64_t w;
      std::size_t a, b;
    };
    std::vector<Candidate> candidates;
    for (std::size_t a = 0; a < p; ++a) {
      for (const auto& [b, w] : quotient.rows[a]) {
        if (a < b) candidates.push_back({w, a, b});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& x, const Candidate& y) { return x.w > y.w; });
    for (const auto& c : candidates) {
      if (mate[c.a] != kNone || mate[c.b] != kNone || !fits(c.a, c.b)) continue;
      mate[c.a] = c.b;
      mate[c.b] = c.a;
      pairs.emplace_back(c.a, c.b);
    }
    std::vector<std::size_t> rest;
    for (std::size_t q = 0; q < p; ++q) {
      if (mate[q] == kNone) rest.push_back(q);
    }
    for (const auto& pr : sorted_size_pairing(rest, sizes)) pairs.push_back(pr);
  }

  // Repair pairs over the bound by exchanging members with another pair.
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (fits(pairs[i].first, pairs[i].second)) continue;
    bool fixed = false;
    for (std::size_t j = 0; j < pairs.size() && !fixed; ++j) {
      if (j == i) continue;
      auto [a, b] = pairs[i];
      auto [c, d] = pairs[j];
      if (fits(a, c) && fits(b, d)) {
        pairs[i] = {a, c};
        pairs[j] = {b, d};
        fixed = true;
      } else if (fits(a, d) && fits(b, c)) {
        pairs[i] = {a, d};
        pairs[j] = {b, c};
        fixed = true;
      }
    }
    if (!fixed) {
      std::vector<std::size_t> all(p);
      std::iota(all.begin(), all.end(), std::size_t{0});
      pairs = sorted_size_pairing(all, sizes);
      break;
    }
  }

  if (!random_pairs) {
    // 2-opt exchanges that keep more cross-edge weight inside pairs.
    for (int pass = 0; pass < 32; ++pass) {
      bool improved = false;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        for (std::size_t j = i + 1; j < pairs.size(); ++j) {
          auto [a, b] = pairs[i];
          auto [c, d] = pairs[j];
          const auto now = quotient.weight(a, b) + quotient.weight(c, d);
          const auto alt1 = quotient.weight(a, c) + quotient.weight(b, d);
          const auto alt2 = quotient.weight(a, d) + quotient.weight(b, c);
          if (alt1 > now && alt1 >= alt2 && fits(a, c) && fits(b, d)) {
            pairs[i] = {a, c};
            pairs[j] = {b, d};
            improved = true;
          } else if (alt2 > now && fits(a, d) && fits(b, c)) {
            pairs[i] = {a, d};
            pairs[j] = {b, c};
            improved = true;
          }
        }
      }
      if (!improved) break;
    }
  }

  for (auto& pr : pairs) {
    if (pr.first > pr.second) std::swap(pr.first, pr.second);
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<std::size_t> pair_of(p, kNone);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    pair_of[pairs[k].first] = k;
    pair_of[pairs[k].second] = k;
  }
  return pair_of;
}

namespace {

// Moves single nodes between finest-level parts until every part of the top level in
// `parents` respects its bound. Each move keeps all lower levels within their bounds, so
// earlier levels stay valid and nesting is untouched. Moves prefer the smallest cut increase.
void enforce_nested_balance(const SpatialGraph& graph, std::vector<std::size_t>& fine,
                            const std::vector<std::vector<std::size_t>>& parents,
                            const std::vector<std::size_t>& counts,
                            const std::vector<std::size_t>& bounds) {
  const std::size_t top = parents.size();
  auto ancestor = [&](std::size_t q, std::size_t level) {
    for (std::size_t k = 0; k < level; ++k) q = parents[k][q];
    return q;
  };
  std::vector<std::vector<std::size_t>> sizes(top + 1);
  for (std::size_t k = 0; k <= top; ++k) sizes[k].assign(counts[k], 0);
  for (auto f : fine) {
    for (std::size_t k = 0; k <= top; ++k) ++sizes[k][ancestor(f, k)];
  }
  std::vector<std::size_t> neighbor_count(counts[0], 0);

  for (;;) {
    std::size_t over = kNone;
    for (std::size_t q = 0; q < counts[top]; ++q) {
      if (sizes[top][q] > bounds[top]) {
        over = q;
        break;
      }
    }
    if (over == kNone) return;

    std::vector<std::uint8_t> open(counts[0], 0);
    for (std::size_t c = 0; c < counts[0]; ++c) {
      if (ancestor(c, top) == over) continue;
      bool room = true;
      for (std::size_t k = 0; k <= top && room; ++k) room = sizes[k][ancestor(c, k)] < bounds[k];
      open[c] = room;
    }
    std::int64_t best_gain = std::numeric_limits<std::int64_t>::min();
    std::size_t best_v = kNone;
    std::size_t best_c = kNone;
    for (std::size_t v = 0; v < fine.size(); ++v) {
      const auto a = fine[v];
      if (ancestor(a, top) != over || sizes[0][a] <= 1) continue;
      for (auto u : graph.neighbors(v)) ++neighbor_count[fine[u]];
      const auto internal = static_cast<std::int64_t>(neighbor_count[a]);
      for (std::size_t c = 0; c < counts[0]; ++c) {
        if (!open[c]) continue;
        const auto gain = static_cast<std::int64_t>(neighbor_count[c]) - internal;
        if (gain > best_gain) {
          best_gain = gain;
          best_v = v;
          best_c = c;
        }
      }
      for (auto u : graph.neighbors(v)) neighbor_count[fine[u]] = 0;
    }
    if (best_v == kNone) throw std::logic_error("nested balance repair found no feasible move");
    const auto from = fine[best_v];
    for (std::size_t k = 0; k <= top; ++k) {
      --sizes[k][ancestor(from, k)];
      ++sizes[k][ancestor(best_c, k)];
    }
    fine[best_v] = best_c;
  }
}

}  // namespace

PartitionHierarchy build_hierarchy(const SpatialGraph& graph, std::size_t p0, std::size_t levels,
                                   double imbalance, std::uint64_t seed, PartitionMethod method) {
  if (levels < 1) throw std::invalid_argument("hierarchy needs at least one level");
  if (levels > 62) throw std::invalid_argument("too many hierarchy levels");
  const std::size_t divisor = std::size_t{1} << (levels - 1);
  if (p0 < 1 || p0 % divisor != 0) {
    throw std::invalid_argument("p0 = " + std::to_string(p0) + " is not divisible by 2^(levels-1) = " +
                                std::to_string(divisor));
  }
  if (p0 > graph.size()) {
    throw std::invalid_argument("p0 = " + std::to_string(p0) + " exceeds node count " +
                                std::to_string(graph.size()));
  }

  const std::size_t n = graph.size();
  const bool random = method == PartitionMethod::kRandom;
  const Partition first = random ? random_balanced_partition(n, p0, detail::derive_seed(seed, 0))
                                 : partition_graph(graph, p0, imbalance, detail::derive_seed(seed, 0));
  std::vector<std::size_t> fine = first.assignment;
  std::vector<std::vector<std::size_t>> parents;
  std::vector<std::size_t> counts = {p0};
  std::vector<std::size_t> bounds = {max_part_size_bound(n, p0, imbalance)};

  auto level_partition = [&](std::size_t level) {
    std::vector<std::size_t> assign(n);
    for (std::size_t v = 0; v < n; ++v) {
      auto q = fine[v];
      for (std::size_t k = 0; k < level; ++k) q = parents[k][q];
      assign[v] = q;
    }
    return Partition::from_assignment(counts[level], std::move(assign));
  };

  for (std::size_t level = 1; level < levels; ++level) {
    const Partition current = level_partition(level - 1);
    parents.push_back(
        pair_parts(graph, current, imbalance, detail::derive_seed(seed, level), random));
    counts.push_back(counts.back() / 2);
    bounds.push_back(max_part_size_bound(n, counts.back(), imbalance));
    enforce_nested_balance(graph, fine, parents, counts, bounds);
  }

  PartitionHierarchy h;
  for (std::size_t level = 0; level < levels; ++level) {
    HierarchyLevel hl;
    hl.partition = level_partition(level);
    hl.layout = make_layout(hl.partition);
    hl.intra.reserve(hl.partition.p);
    for (const auto& part : hl.partition.parts) hl.intra.push_back(spd_table(graph, part));
    hl.coarse = coarse_spd(hl.partition, graph);
    h.levels.push_back(std::move(hl));
  }
  return h;
}

}  // namespace s2cast
