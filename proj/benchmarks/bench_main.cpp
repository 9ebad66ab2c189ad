#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "sscd/metrics.hpp"
#include "sscd/model.hpp"
#include "sscd/perturb.hpp"
#include "sscd/rng.hpp"

namespace {

using namespace sscd;

void BM_TinyForward(benchmark::State& state) {
  torch::manual_seed(0);
  torch::NoGradGuard no_grad;
  ChangeDetector model(ModelConfig::tiny());
  model->eval();
  const int64_t size = state.range(0);
  Rng rng(1);
  auto a = rng.uniform_tensor({1, 3, size, size}, 0, 1);
  auto b = rng.uniform_tensor({1, 3, size, size}, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(a, b).prediction.probs);
}
BENCHMARK(BM_TinyForward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_ApplyAll(benchmark::State& state) {
  torch::manual_seed(0);
  Decoder decoder(32, 16);
  ProbabilityFn decode = [&](const torch::Tensor& x) {
    return torch::softmax(decoder->forward(x), 1);
  };
  Rng rng(2);
  FeatureDifferenceMap fd{rng.uniform_tensor({8, 32, 16, 16}, 0, 2)};
  ChangeProbabilityMap y_hat;
  {
    torch::NoGradGuard no_grad;
    y_hat = ChangeProbabilityMap::from_logits(decoder->forward(fd.data));
  }
  const auto specs = default_perturbation_specs();
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_all(fd, y_hat, specs, rng, decode, specs.size()));
  }
}
BENCHMARK(BM_ApplyAll)->Unit(benchmark::kMillisecond);

void BM_Accumulate(benchmark::State& state) {
  const int64_t size = state.range(0);
  auto pred = torch::randint(0, 2, {size, size}, torch::kUInt8);
  auto gt = torch::randint(0, 2, {size, size}, torch::kUInt8);
  for (auto _ : state) benchmark::DoNotOptimize(accumulate(pred, gt));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Accumulate)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
