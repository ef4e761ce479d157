#include <benchmark/benchmark.h>

#include "flk/network.hpp"
#include "flk/random.hpp"
#include "flk/spectral.hpp"
#include "flk/verify.hpp"

namespace {

void BM_Fft2(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  flk::Rng rng(1);
  const flk::Tensor x = rng.uniform_tensor({n, n, 8}, -1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(flk::fft2(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_Fft2)->Arg(32)->Arg(64)->Arg(100)->Arg(128);

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  flk::Rng rng(2);
  const flk::Tensor x = rng.uniform_tensor({64, 64, c}, -1.0, 1.0);
  const flk::ConvSpec spec = flk::ConvSpec::same(3, c, c);
  const flk::Tensor w = rng.uniform_tensor(spec.weight_shape(), -0.1, 0.1);
  const flk::Tensor b = rng.uniform_tensor({c}, -0.1, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(flk::conv2d(x, spec, w, &b));
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(24)->Arg(48);

void BM_ForwardTiny(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const flk::ModelConfig cfg = flk::ModelConfig::tiny();
  const flk::ParamStore p = flk::randomized_model(cfg, 3);
  flk::Rng rng(4);
  const flk::Burst b{rng.uniform_tensor({n, n, 3}, 0.0, 1.0), rng.uniform_tensor({n, n, 3}, 0.0, 1.0),
                     rng.uniform_tensor({n, n, 3}, 0.0, 1.0)};
  for (auto _ : state) benchmark::DoNotOptimize(flk::forward(b, p, cfg));
}
BENCHMARK(BM_ForwardTiny)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
