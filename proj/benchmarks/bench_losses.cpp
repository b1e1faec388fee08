#include <benchmark/benchmark.h>

#include <random>

#include "rbc/losses.hpp"

namespace {

using namespace rbc;

struct Fixture {
  explicit Fixture(std::size_t k) : grid(share(make_linear_grid(0.0, 1.0, k))), logits(k) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& z : logits) z = n(rng);
  }
  GridPtr grid;
  std::vector<double> logits;
};

void BM_W1Cdf(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  const Histogram p = softmax_head(f.grid, f.logits);
  const Histogram q = gaussian_smooth(Histogram::one_hot(f.grid, f.grid->size() / 3), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(w1_cdf(p, q));
}
BENCHMARK(BM_W1Cdf)->Arg(16)->Arg(64)->Arg(256);

void BM_LossAndGrad(benchmark::State& state) {
  const Fixture f(64);
  const Histogram q = gaussian_smooth(Histogram::one_hot(f.grid, 20), 1.0);
  const auto loss = static_cast<LossKind>(state.range(0));
  const auto head = static_cast<HeadKind>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(head, f.logits, q, loss, {1.0 / 64}));
  state.SetLabel(std::string(to_string(head)) + "/" + std::string(to_string(loss)));
}
BENCHMARK(BM_LossAndGrad)->ArgsProduct({{0, 1, 2}, {0, 1}});

void BM_GaussianSmooth(benchmark::State& state) {
  const Fixture f(64);
  const Histogram h = Histogram::one_hot(f.grid, 32);
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_smooth(h, static_cast<double>(state.range(0))));
}
BENCHMARK(BM_GaussianSmooth)->Arg(1)->Arg(4);

}  // namespace
