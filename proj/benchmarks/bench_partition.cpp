#include <benchmark/benchmark.h>

#include "s2cast/dataset.hpp"
#include "s2cast/hierarchy.hpp"
#include "s2cast/partition.hpp"
#include "s2cast/spatial_graph.hpp"

namespace {

s2cast::SpatialGraph station_graph(std::size_t n) {
  s2cast::SynthConfig sc;
  sc.n = n;
  sc.steps = 1;
  sc.cap_radius_km = 3000.0;
  const auto stations = s2cast::synth_generate(sc).stations;
  return s2cast::build_spatial_graph(stations, s2cast::epsilon_from_knn_quantile(stations, 8, 0.5));
}

void BM_PartitionGraph(benchmark::State& state) {
  const auto g = station_graph(static_cast<std::size_t>(state.range(0)));
  const auto p = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(s2cast::partition_graph(g, p, 0.03, 0));
}
BENCHMARK(BM_PartitionGraph)->Args({500, 16})->Args({1000, 32})->Args({2000, 64})->Unit(benchmark::kMillisecond);

void BM_BuildHierarchy(benchmark::State& state) {
  const auto g = station_graph(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(s2cast::build_hierarchy(g, 32, 2, 0.03, 0));
}
BENCHMARK(BM_BuildHierarchy)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_SpdTable(benchmark::State& state) {
  const auto g = station_graph(static_cast<std::size_t>(state.range(0)));
  const auto part = s2cast::partition_graph(g, 16, 0.03, 0);
  for (auto _ : state) {
    for (const auto& members : part.parts) benchmark::DoNotOptimize(s2cast::spd_table(g, members));
  }
}
BENCHMARK(BM_SpdTable)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
