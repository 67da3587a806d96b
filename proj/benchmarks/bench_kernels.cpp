#include <benchmark/benchmark.h>

#include <random>

#include "metarecon/fft.hpp"
#include "metarecon/ops.hpp"

using namespace metarecon;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

void BM_Fft2c(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({4, n, n, 2}, 1);
  NoGradGuard off;
  for (auto _ : state) benchmark::DoNotOptimize(fft2c(x));
  state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_Fft2c)->Arg(32)->Arg(48)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({c, 48, 48}, 2);
  const Tensor k = random_tensor({c, c, 3, 3}, 3);
  NoGradGuard off;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1));
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({c, 48, 48}, 4).detach(true);
  const Tensor k = random_tensor({c, c, 3, 3}, 5).detach(true);
  for (auto _ : state) {
    const Tensor y = sum(conv2d(x, k, 1));
    const std::vector<Tensor> inputs{x, k};
    benchmark::DoNotOptimize(grad(y, inputs, false));
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
