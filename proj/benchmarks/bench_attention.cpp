#include <random>

#include <benchmark/benchmark.h>

#include "s2cast/dataset.hpp"
#include "s2cast/model.hpp"
#include "s2cast/ops.hpp"
#include "s2cast/train.hpp"

namespace {

using s2cast::nn::Tensor;

struct Setup {
  s2cast::TrainConfig cfg;
  s2cast::Pipeline pipeline;
  Tensor input;

  Setup(std::size_t n, std::size_t p0) {
    s2cast::SynthConfig sc;
    sc.n = n;
    sc.steps = 1;
    const auto stations = s2cast::synth_generate(sc).stations;
    cfg.p0 = p0;
    pipeline = s2cast::build_pipeline(stations, cfg);
    input = Tensor({cfg.batch_size, n, cfg.model.input_steps, cfg.model.channels});
    std::mt19937_64 rng(0);
    std::normal_distribution<double> nd;
    for (auto& v : input.values()) v = static_cast<s2cast::nn::Real>(nd(rng));
  }
};

void BM_Forward(benchmark::State& state) {
  const Setup s(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  s2cast::Forecaster model(s.cfg.model, 0);
  for (auto _ : state) {
    s2cast::nn::Tape tape;
    benchmark::DoNotOptimize(model.forward(tape, s.pipeline.context, s.input).value().data());
  }
}
BENCHMARK(BM_Forward)->Args({200, 16})->Args({200, 32})->Args({400, 32})->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const Setup s(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  s2cast::Forecaster model(s.cfg.model, 0);
  for (auto _ : state) {
    model.params().zero_grad();
    s2cast::nn::Tape tape;
    tape.backward(s2cast::nn::sum(model.forward(tape, s.pipeline.context, s.input)));
  }
}
BENCHMARK(BM_ForwardBackward)->Args({200, 32})->Unit(benchmark::kMillisecond);

void BM_MaskedSoftmax(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Tensor scores({8, 32, m, m});
  for (auto& v : scores.values()) v = static_cast<s2cast::nn::Real>(nd(rng));
  for (auto _ : state) {
    s2cast::nn::Tape tape;
    benchmark::DoNotOptimize(
        s2cast::nn::masked_softmax(tape.constant(scores), nullptr, nullptr).value().data());
  }
}
BENCHMARK(BM_MaskedSoftmax)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

}  // namespace
