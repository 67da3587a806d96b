#include <benchmark/benchmark.h>

#include <random>

#include "metarecon/trainer.hpp"
#include "metarecon/unroll.hpp"

using namespace metarecon;

namespace {

struct Setup {
  std::vector<TaskDataset> train;
  ModelSpec spec;

  explicit Setup(std::size_t width) {
    for (const TaskSplit& s : synthesize(SynthConfig{})) train.push_back(s.train);
    spec.width = spec.meta_width = spec.features = width;
    spec.outer_iterations = 3;
    spec.inner_steps = 2;
  }
};

void BM_Reconstruct(benchmark::State& state) {
  const Setup setup(static_cast<std::size_t>(state.range(0)));
  const ParamStore store = init_params(setup.spec, 1);
  const auto inputs = slice_inputs(setup.train, 0);
  NoGradGuard off;
  for (auto _ : state) {
    benchmark::DoNotOptimize(reconstruct(inputs, store, ReconConfig::from(setup.spec)));
  }
}
BENCHMARK(BM_Reconstruct)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

// One epoch with K = 1: a Theta step and a W step on a one-slice batch.
void BM_MetaEpoch(benchmark::State& state) {
  const Setup setup(static_cast<std::size_t>(state.range(0)));
  ParamStore store = init_params(setup.spec, 2);
  OptimizerState opt = OptimizerState::for_store(store);
  TrainConfig tc;
  tc.inner_steps = 1;
  tc.batch = 1;
  std::mt19937_64 rng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        meta_train_epoch(setup.train, store, opt, tc, ReconConfig::from(setup.spec), rng));
  }
}
BENCHMARK(BM_MetaEpoch)->Arg(8)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
