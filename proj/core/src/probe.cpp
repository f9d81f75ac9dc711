#include "s2cast/probe.hpp"

#include <limits>
#include <sstream>
#include <stdexcept>

#include "s2cast/dataset.hpp"
#include "s2cast/hierarchy.hpp"
#include "s2cast/model.hpp"
#include "s2cast/spherical_harmonics.hpp"
#include "s2cast/train.hpp"

namespace s2cast {

double analytic_cost(std::size_t n, std::size_t p) {
  if (p == 0) throw std::invalid_argument("analytic_cost: p must be positive");
  const double nn = static_cast<double>(n);
  const double pp = static_cast<double>(p);
  return nn * nn / pp + pp * pp;
}

ProbeResult complexity_probe(std::size_t n, const std::vector<std::size_t>& p_grid,
                             std::uint64_t seed) {
  if (p_grid.empty()) throw std::invalid_argument("complexity_probe: empty P grid");
  for (auto p : p_grid) {
    if (p == 0 || p > n) {
      throw std::invalid_argument("complexity_probe: P = " + std::to_string(p) +
                                  " must lie in [1, " + std::to_string(n) + "]");
    }
  }

  SynthConfig sc;
  sc.n = n;
  sc.steps = 1;
  sc.seed = seed;
  sc.cap_radius_km = 3000.0;
  const Dataset data = synth_generate(sc);
  const auto graph =
      build_spatial_graph(data.stations, resolve_epsilon(data.stations, 0.0));

  ModelConfig mc;
  mc.d_model = 4;
  mc.input_steps = 1;
  mc.horizon = 1;
  mc.channels = 1;
  mc.l_max = 0;
  mc.levels = 1;
  Forecaster model(mc, seed);
  const HarmonicBasis basis = build_basis(data.stations, mc.l_max);

  ProbeResult result;
  result.n = n;
  double best_analytic = std::numeric_limits<double>::infinity();
  std::size_t best_measured = std::numeric_limits<std::size_t>::max();
  for (auto p : p_grid) {
    const auto hierarchy = build_hierarchy(graph, p, 1, 0.0, seed);
    const auto ctx = ModelContext::build(hierarchy, basis, mc.d_max);
    nn::Tape tape;
    ForwardTrace trace;
    model.forward(tape, ctx, nn::Tensor({1, n, 1, 1}), &trace);

    ProbeRow row;
    row.p = p;
    row.m = hierarchy.levels.front().layout.m;
    row.analytic_cost = analytic_cost(n, p);
    row.measured_entries = trace.score_entries;
    row.expected_entries = expected_score_entries(hierarchy);
    if (row.analytic_cost < best_analytic) {
      best_analytic = row.analytic_cost;
      result.analytic_argmin = p;
    }
    if (row.measured_entries < best_measured) {
      best_measured = row.measured_entries;
      result.measured_argmin = p;
    }
    result.rows.push_back(row);
  }
  return result;
}

std::string probe_csv(const ProbeResult& result) {
  std::ostringstream os;
  os.precision(17);
  os << "P,analytic_cost,measured_entries\n";
  for (const auto& r : result.rows) {
    os << r.p << ',' << r.analytic_cost << ',' << r.measured_entries << '\n';
  }
  return os.str();
}

}  // namespace s2cast
