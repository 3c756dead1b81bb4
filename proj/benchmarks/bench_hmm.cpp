#include <vector>

#include <benchmark/benchmark.h>

#include "glyco/hmm.hpp"
#include "glyco/rng.hpp"

namespace {

using namespace glyco;

std::vector<double> rows(Rng& rng, std::size_t r, std::size_t c) {
  std::vector<double> p(r * c);
  for (auto& v : p) v = 0.01 + rng.uniform();
  return p;
}

HmmModel model(std::size_t n) {
  Rng rng(1);
  return HmmModel::from_probabilities(rows(rng, 1, n), rows(rng, n, n), rows(rng, n, n), n, n);
}

std::vector<std::size_t> symbols(std::size_t m, std::size_t len) {
  Rng rng(2);
  std::vector<std::size_t> y(len);
  for (auto& s : y) s = rng.below(m);
  return y;
}

void BM_Viterbi(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = model(n);
  const auto y = symbols(n, 144);
  for (auto _ : state) benchmark::DoNotOptimize(viterbi(m, y));
}
BENCHMARK(BM_Viterbi)->Arg(10)->Arg(100);

void BM_Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = model(n);
  const auto y = symbols(n, 144);
  for (auto _ : state) benchmark::DoNotOptimize(forward_log_likelihood(m, y));
}
BENCHMARK(BM_Forward)->Arg(10)->Arg(100);

void BM_BaumWelchIteration(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::vector<std::vector<std::size_t>> data(20, symbols(n, 144));
  for (auto _ : state) benchmark::DoNotOptimize(baum_welch_from(model(n), data, 1, 0.0));
  state.SetItemsProcessed(state.iterations() * 20 * 144);
}
BENCHMARK(BM_BaumWelchIteration)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_Forecast(benchmark::State& state) {
  const auto m = model(100);
  const Quantizer q(100, 40, 400);
  std::vector<double> in(132);
  for (std::size_t t = 0; t < in.size(); ++t) in[t] = 100 + double(t);
  for (auto _ : state) benchmark::DoNotOptimize(hmm_forecast(m, q, in, 12));
}
BENCHMARK(BM_Forecast);

}  // namespace

BENCHMARK_MAIN();
