#include <benchmark/benchmark.h>

#include <random>

#include "rbc/network.hpp"

namespace {

using namespace rbc;

NetworkModel make_model(Pooling pooling) {
  NetworkSpec spec;
  spec.pooling = pooling;
  NetworkModel m(spec, share(make_linear_grid(-1.0, 1.0, spec.bins)), share(make_linear_grid(0.0, 64.0, spec.bins)));
  m.initialize(1);
  return m;
}

Image noise_image() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> px(64 * 64);
  for (auto& v : px) v = u(rng);
  return Image(64, 64, std::move(px));
}

void BM_Forward(benchmark::State& state) {
  const NetworkModel m = make_model(static_cast<Pooling>(state.range(0)));
  const Image img = noise_image();
  for (auto _ : state) benchmark::DoNotOptimize(forward_logits(m, img));
  state.SetLabel(std::string(to_string(m.spec().pooling)));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_BackwardBatch(benchmark::State& state) {
  const NetworkModel m = make_model(Pooling::Flatten);
  const Image img = noise_image();
  const Histogram a = gaussian_smooth(Histogram::one_hot(m.alpha_grid(), 10), 1.0);
  const Histogram r = gaussian_smooth(Histogram::one_hot(m.rho_grid(), 40), 1.0);
  const std::vector<Example> batch(static_cast<std::size_t>(state.range(0)), Example{&img, &a, &r});
  const LossConfig loss{LossKind::HingeW1, {1.0 / 64}};
  for (auto _ : state) benchmark::DoNotOptimize(backward(m, batch, loss));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BackwardBatch)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
