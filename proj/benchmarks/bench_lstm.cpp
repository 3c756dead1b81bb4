#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "glyco/lstm.hpp"
#include "glyco/pipeline.hpp"

namespace {

using namespace glyco;

std::vector<double> wave(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t t = 0; t < n; ++t) v[t] = 160 + 60 * std::sin(0.05 * double(t));
  return v;
}

LstmNetwork net(std::size_t h, std::size_t layers) {
  LstmConfig c;
  c.hidden_size = h;
  c.n_layers = layers;
  return LstmNetwork::create(c);
}

void BM_Rollout(benchmark::State& state) {
  const auto n = net(static_cast<std::size_t>(state.range(0)), 3);
  const auto in = wave(132);
  for (auto _ : state) benchmark::DoNotOptimize(rollout(n, in, 12));
}
BENCHMARK(BM_Rollout)->Arg(4)->Arg(8)->Arg(16);

void BM_RolloutWithTrace(benchmark::State& state) {
  const auto n = net(8, 3);
  const auto in = wave(132);
  for (auto _ : state) benchmark::DoNotOptimize(rollout(n, in, 12, true));
}
BENCHMARK(BM_RolloutWithTrace);

void BM_Gradients(benchmark::State& state) {
  const auto n = net(static_cast<std::size_t>(state.range(0)), 3);
  const auto v = wave(144);
  const std::vector<double> in(v.begin(), v.begin() + 132), target(v.begin() + 132, v.end());
  const auto mode = state.range(1) ? TrainMode::TeacherForcing : TrainMode::Recursive;
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradients(n, in, target, mode));
}
BENCHMARK(BM_Gradients)->Args({8, 0})->Args({8, 1})->Args({16, 0});

void BM_TrainEpoch(benchmark::State& state) {
  PreparedSet set;
  const auto v = wave(144 + 256);
  for (std::size_t off = 0; off < 256; ++off)
    set.train.push_back({std::vector<double>(v.begin() + off, v.begin() + off + 132),
                         std::vector<double>(v.begin() + off + 132, v.begin() + off + 144), 0, off});
  TrainOptions o;
  o.epochs = 1;
  o.batch = 32;
  o.threads = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train(net(8, 3), set, o));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_TrainEpoch)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
