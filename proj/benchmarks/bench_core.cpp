#include <benchmark/benchmark.h>

#include "morphoprobe/backends.hpp"
#include "morphoprobe/clustering.hpp"
#include "morphoprobe/nn/char_lstm.hpp"
#include "morphoprobe/nn/loss.hpp"
#include "morphoprobe/nn/mlp_probe.hpp"
#include "morphoprobe/shapley.hpp"

using namespace morphoprobe;

namespace {

CoalitionTable random_table(std::uint64_t seed) {
  Xoshiro256 rng(seed);
  CoalitionTable t;
  for (std::uint32_t m = 0; m <= kFullCoalition; ++m) t.set(Coalition{m}, rng.uniform());
  t.set(Coalition::none(), 0.25);
  t.set(Coalition::full(), 0.9);
  return t;
}

void BM_ShapleyFromTable(benchmark::State& state) {
  const CoalitionTable t = random_table(1);
  for (auto _ : state) benchmark::DoNotOptimize(shapley_from_table(t));
}
BENCHMARK(BM_ShapleyFromTable);

// 13 layers of 768 dims, as for a base-size encoder.
void BM_MlpForwardBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Xoshiro256 rng(2);
  nn::MlpProbeConfig c;
  c.n_layers = 13;
  c.dim = 768;
  c.n_classes = 4;
  nn::MlpProbe<float> probe(c, rng);
  std::vector<nn::Matrix<float>> x(13, nn::Matrix<float>(768, batch));
  for (auto& m : x) nn::normal_init(m, 1.0f, rng);
  std::vector<int> y(static_cast<std::size_t>(batch));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 4);
  auto params = probe.parameters();
  for (auto _ : state) {
    nn::zero_grad(params);
    const auto lp = probe.forward(x, true, &rng);
    probe.backward(nn::cross_entropy_grad<float>(lp, y));
    benchmark::DoNotOptimize(params.front()->grad.data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(32)->Arg(128);

void BM_CharLstmForwardBackward(benchmark::State& state) {
  Xoshiro256 rng(3);
  nn::CharLstmConfig c;
  c.vocab_size = 60;
  c.n_classes = 4;
  nn::CharLstm<float> model(c, rng);
  nn::CharBatch b;
  std::vector<int> y;
  for (int i = 0; i < 32; ++i) {
    std::vector<int> ids(60);
    for (auto& v : ids) v = 2 + static_cast<int>(rng.below(58));
    b.ids.push_back(std::move(ids));
    b.positions.push_back(30);
    y.push_back(i % 4);
  }
  auto params = model.parameters();
  for (auto _ : state) {
    nn::zero_grad(params);
    const auto lp = model.forward(b, true, &rng);
    model.backward(nn::cross_entropy_grad<float>(lp, y));
    benchmark::DoNotOptimize(params.front()->grad.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_CharLstmForwardBackward);

void BM_RandomControlEmbed(benchmark::State& state) {
  RandomControlConfig c;
  c.mode = state.range(0) ? RandomMode::random_layers : RandomMode::fully_random;
  c.dim = 64;
  const RandomControlBackend backend(c);
  const EmbeddingRequest req{{"the", "houses", "of", "parliament", "stood", "empty", "for", "days"}, {2}, "random"};
  for (auto _ : state) benchmark::DoNotOptimize(backend.embed(req));
}
BENCHMARK(BM_RandomControlEmbed)->Arg(0)->Arg(1);

void BM_ConsensusCluster(benchmark::State& state) {
  Xoshiro256 rng(4);
  FeatureMatrix f;
  f.values.resize(42, 60);
  for (int i = 0; i < 42; ++i) {
    f.rows.push_back("l" + std::to_string(i));
    for (int j = 0; j < 60; ++j) f.values(i, j) = rng.normal();
  }
  for (int j = 0; j < 60; ++j) f.cols.push_back("c" + std::to_string(j));
  for (auto _ : state) benchmark::DoNotOptimize(consensus_cluster(f, {}));
}
BENCHMARK(BM_ConsensusCluster)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
