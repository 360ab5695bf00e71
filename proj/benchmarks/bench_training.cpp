#include <benchmark/benchmark.h>

#include "angdist/data.hpp"
#include "angdist/model.hpp"
#include "angdist/trainer.hpp"

namespace {

angdist::Dataset blobs() {
  angdist::SynthConfig cfg;
  cfg.classes = 10;
  cfg.dim = 32;
  cfg.per_class = 64;
  return angdist::generate_synthetic(cfg);
}

// One forward/backward pass of the default MLP with CE + ADD on a batch.
void BM_TrainingStep(benchmark::State& state) {
  const auto ds = blobs();
  angdist::ModelConfig mc;
  mc.input_dim = ds.feature_dim();
  mc.classes = ds.classes();
  const auto params = angdist::init_mlp(mc, 0);
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  std::vector<std::size_t> idx(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) idx[i] = (i * 37) % ds.size();
  const auto sub = ds.subset(idx);
  const angdist::LossWeights w(1, 1, 1, 1);
  for (auto _ : state) {
    const auto trace = angdist::forward(params, sub.features());
    const auto ce = angdist::cross_entropy(trace.probabilities, sub.labels());
    const auto add = angdist::add_loss_hard_grad(trace.raw_embedding, sub.labels(), w);
    benchmark::DoNotOptimize(angdist::backward(params, trace, ce.dlogits, add.grads));
  }
}
BENCHMARK(BM_TrainingStep)->Arg(32)->Arg(128);

void BM_TrainEpoch(benchmark::State& state) {
  const auto ds = blobs();
  angdist::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.eval_fraction = 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(angdist::train(ds, angdist::ModelConfig{}, cfg));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
