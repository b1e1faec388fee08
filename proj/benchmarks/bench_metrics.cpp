#include <benchmark/benchmark.h>

#include <random>

#include "rbc/metrics.hpp"

namespace {

using namespace rbc;

void BM_Sparsification(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<EvalRecord> records(static_cast<std::size_t>(state.range(0)));
  for (auto& r : records) r = {u(rng), u(rng)};
  for (auto _ : state) benchmark::DoNotOptimize(sparsification(records, 100));
}
BENCHMARK(BM_Sparsification)->Arg(500)->Arg(5000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
