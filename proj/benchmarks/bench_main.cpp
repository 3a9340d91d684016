#include <benchmark/benchmark.h>

#include <vector>

#include "tuned/dense.hpp"
#include "tuned/evidence.hpp"
#include "tuned/fusion.hpp"
#include "tuned/graph.hpp"
#include "tuned/rng.hpp"
#include "tuned/train.hpp"

using namespace tuned;

namespace {

Tensor2D random(std::size_t rows, std::size_t cols, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor2D t(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t(i, j) = rng.uniform(lo, hi);
  return t;
}

void BM_DenseForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nn::Rng rng(1);
  nn::DenseLayer layer(64, 64, nn::Activation::relu);
  layer.initialize(rng);
  const auto x = random(n, 64, rng), up = random(n, 64, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(layer.forward(x));
    benchmark::DoNotOptimize(layer.backward(up));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_DenseForwardBackward)->Arg(128)->Arg(1024);

void BM_CanGraph(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nn::Rng rng(2);
  const auto x = random(n, 16, rng);
  for (auto _ : state) benchmark::DoNotOptimize(graph::build_neighbor_graph(x, 10));
}
BENCHMARK(BM_CanGraph)->Arg(200)->Arg(1000);

void BM_GcnForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nn::Rng rng(3);
  const auto g = graph::build_neighbor_graph(random(n, 16, rng), 10);
  graph::GcnLayer layer(16, 64, nn::Activation::relu);
  layer.initialize(rng);
  const auto x = random(n, 16, rng), up = random(n, 64, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(layer.forward(g.normalized, x));
    benchmark::DoNotOptimize(layer.backward(up));
  }
}
BENCHMARK(BM_GcnForwardBackward)->Arg(200)->Arg(1000);

void BM_Attention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nn::Rng rng(4);
  const auto q = random(n, 5, rng), k = random(n, 5, rng), v = random(n, 5, rng), up = random(n, 5, rng);
  for (auto _ : state) {
    evidence::AttentionCache cache;
    benchmark::DoNotOptimize(evidence::attention_forward(q, k, v, &cache));
    benchmark::DoNotOptimize(evidence::attention_backward(cache, up));
  }
}
BENCHMARK(BM_Attention)->Arg(128)->Arg(700);

void BM_Fusion(benchmark::State& state) {
  const auto backend = static_cast<fusion::Backend>(state.range(0));
  nn::Rng rng(5);
  std::vector<Tensor2D> views;
  for (int v = 0; v < 4; ++v) views.push_back(random(1000, 5, rng, 0.0, 10.0));
  for (auto _ : state) benchmark::DoNotOptimize(fusion::fuse(backend, views));
  state.SetLabel(std::string(fusion::to_string(backend)));
}
BENCHMARK(BM_Fusion)->DenseRange(0, 2);

void BM_FusionPerSample(benchmark::State& state) {
  nn::Rng rng(6);
  std::vector<Tensor2D> views;
  for (int v = 0; v < 4; ++v) views.push_back(random(1000, 5, rng, 0.0, 10.0));
  const fusion::FusionOptions ps{0.7, fusion::SimilarityScope::per_sample, fusion::Reduction::edge_sum, false};
  for (auto _ : state) benchmark::DoNotOptimize(fusion::fuse(fusion::Backend::smrf, views, ps));
}
BENCHMARK(BM_FusionPerSample);

void BM_TrainSynthetic(benchmark::State& state) {
  pipeline::SyntheticSpec spec;
  spec.samples = 300;
  spec.views = 3;
  spec.classes = 5;
  spec.dim = 16;
  spec.informativeness = {2.0, 2.0, 2.0};
  spec.seed = 7;
  const auto data = pipeline::gen_synthetic(spec);
  pipeline::ModelConfig config;
  config.epochs = 20;
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::train(data, config, 7));
}
BENCHMARK(BM_TrainSynthetic)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
