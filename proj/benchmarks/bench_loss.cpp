#include <random>

#include <benchmark/benchmark.h>

#include "angdist/geometry.hpp"
#include "angdist/gradients.hpp"

namespace {

struct Inputs {
  angdist::Matrix raw;
  std::vector<angdist::LabelVector> labels;
};

Inputs make_inputs(std::size_t batch, std::size_t dim, std::size_t classes) {
  std::mt19937_64 rng(batch * 31 + dim);
  std::normal_distribution<double> n(0.0, 1.0);
  Inputs in{angdist::Matrix(batch, dim), {}};
  for (double& v : in.raw.data()) v = n(rng);
  for (std::size_t i = 0; i < batch; ++i) in.labels.push_back(angdist::LabelVector::one_hot(classes, i % classes));
  return in;
}

void BM_HardLossForward(benchmark::State& state) {
  const auto in = make_inputs(static_cast<std::size_t>(state.range(0)), 16, 10);
  std::vector<angdist::UnitEmbedding> z;
  for (std::size_t r = 0; r < in.raw.rows(); ++r) z.push_back(angdist::normalize(in.raw.row(r)));
  const angdist::Batch batch(z, in.labels);
  const angdist::LossWeights w(1, 1, 1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(angdist::add_loss_hard(batch, w));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_HardLossForward)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNSquared);

void BM_HardLossGradient(benchmark::State& state) {
  const auto in = make_inputs(static_cast<std::size_t>(state.range(0)), 16, 10);
  const angdist::LossWeights w(1, 1, 1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(angdist::add_loss_hard_grad(in.raw, in.labels, w));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_HardLossGradient)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNSquared);

void BM_SoftLossGradient(benchmark::State& state) {
  const auto in = make_inputs(static_cast<std::size_t>(state.range(0)), 16, 10);
  for (auto _ : state) benchmark::DoNotOptimize(angdist::add_loss_soft_grad(in.raw, in.labels, 1.0, 1.0));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SoftLossGradient)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNSquared);

}  // namespace
