#include <benchmark/benchmark.h>

#include <vector>

#include "ash/ops.hpp"
#include "ash/snn.hpp"
#include "ash/spike_codec.hpp"

namespace {

using namespace ash;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = Tensor::uniform({n, n}, rng, -1.0, 1.0), b = Tensor::uniform({n, n}, rng, -1.0, 1.0);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor a = Tensor::uniform({n, n}, rng, -1.0, 1.0), b = Tensor::uniform({n, n}, rng, -1.0, 1.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    sum(matmul(a, b)).backward();
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64);

// The default concrete stack's first layer on one 32x32 image.
void BM_Conv2d(benchmark::State& state) {
  Rng rng(3);
  const Tensor x = Tensor::uniform({1, 3, 32, 32}, rng, 0.0, 1.0);
  const Tensor k = Tensor::uniform({16, 3, 3, 3}, rng, -0.5, 0.5);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, {.stride = 1, .padding = 1}));
}
BENCHMARK(BM_Conv2d);

void BM_LifStep(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const snn::LifConfig cfg;
  const Tensor input = Tensor::uniform({rows, 32}, rng, 0.0, 1.5);
  NoGradGuard no_grad;
  snn::MembraneState s = snn::MembraneState::at_rest({rows, 32}, cfg);
  for (auto _ : state) {
    auto out = snn::lif_step(cfg, s, input);
    s = std::move(out.state);
    benchmark::DoNotOptimize(out.spikes);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * 32));
}
BENCHMARK(BM_LifStep)->Arg(16)->Arg(256);

void BM_SpikeEncode(benchmark::State& state) {
  Rng rng(5);
  std::vector<double> intensities(16 * 64);
  for (double& v : intensities) v = rng.uniform();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(spike::encode_probabilistic(intensities, 10, ++seed));
}
BENCHMARK(BM_SpikeEncode);

void BM_Attention(benchmark::State& state) {
  const auto seq = static_cast<std::size_t>(state.range(0));
  const std::size_t batch = 16, d = 64;
  Rng rng(6);
  const Tensor q = Tensor::uniform({batch * seq, d}, rng, -1.0, 1.0);
  const Tensor k = Tensor::uniform({batch * seq, d}, rng, -1.0, 1.0);
  const Tensor v = Tensor::uniform({batch * seq, d}, rng, -1.0, 1.0);
  const std::vector<std::uint8_t> mask(batch * seq, 1);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(multi_head_attention(q, k, v, batch, seq, 4, mask));
}
BENCHMARK(BM_Attention)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
