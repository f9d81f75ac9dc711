#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace s2cast {

/// N^2 / P + P^2, the per-feature attention cost of one level.
double analytic_cost(std::size_t n, std::size_t p);

struct ProbeRow {
  std::size_t p = 0;
  std::size_t m = 0;  // largest part size of the measured partition
  double analytic_cost = 0.0;
  std::size_t measured_entries = 0;  // counted by an instrumented forward pass
  std::size_t expected_entries = 0;  // P * M^2 + P^2 from the layout
};

struct ProbeResult {
  std::size_t n = 0;
  std::vector<ProbeRow> rows;
  std::size_t analytic_argmin = 0;
  std::size_t measured_argmin = 0;
};

/// For each P: partitions n synthetic stations into P balanced parts (single level, zero
/// imbalance), runs one forward pass of a small model and records the attention score
/// count next to the analytic cost.
ProbeResult complexity_probe(std::size_t n, const std::vector<std::size_t>& p_grid,
                             std::uint64_t seed = 0);

/// Header `P,analytic_cost,measured_entries`.
std::string probe_csv(const ProbeResult& result);

}  // namespace s2cast
