#include <sstream>

#include <benchmark/benchmark.h>

#include "glyco/ingest.hpp"
#include "glyco/pipeline.hpp"

namespace {

using namespace glyco;

const Corpus& corpus() {
  static const Corpus c = synth_corpus(5, 30, 42);
  return c;
}

void BM_ParseCgm(benchmark::State& state) {
  std::ostringstream out;
  write_cgm_csv(out, corpus().readings);
  const std::string text = out.str();
  for (auto _ : state) {
    std::istringstream in(text);
    benchmark::DoNotOptimize(parse_cgm_csv(in));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_ParseCgm)->Unit(benchmark::kMillisecond);

void BM_SegmentAndPrepare(benchmark::State& state) {
  PrepareOptions o;
  o.train_step = static_cast<std::size_t>(state.range(0));
  o.test_step = 144;
  for (auto _ : state) {
    const auto seqs = segment(corpus().readings);
    const auto folds = kfold_split(seqs, 5, 42, 144);
    benchmark::DoNotOptimize(prepare(seqs, folds[0], o));
  }
}
BENCHMARK(BM_SegmentAndPrepare)->Arg(1)->Arg(12)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
