// Micro benchmarks for the hot paths: neighbour search, model passes, prediction and the
// contamination scan.

#include <benchmark/benchmark.h>

#include <random>

#include "tabdpt/contam_check.hpp"
#include "tabdpt/infer.hpp"
#include "tabdpt/nn_index.hpp"
#include "tabdpt/synthetic.hpp"
#include "tabdpt/trainer.hpp"

using namespace tabdpt;

namespace {

MatrixXdR gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  MatrixXdR m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

static void BM_NeighborQuery(benchmark::State& state) {
  const auto n = state.range(0);
  const auto idx = NeighborIndex::build(gaussian(n, 32, 1));
  const MatrixXdR q = gaussian(1, 32, 2);
  const std::vector<double> point(q.data(), q.data() + 32);
  for (auto _ : state) benchmark::DoNotOptimize(idx.query(point, 256));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_NeighborQuery)->Arg(1000)->Arg(10000)->Arg(100000);

static void BM_Forward(benchmark::State& state) {
  ModelConfig c;
  c.num_layers = static_cast<std::size_t>(state.range(0));
  c.dim = static_cast<std::size_t>(state.range(1));
  const auto p = init_params<float>(c, 1);
  const Mat<float> xc = gaussian(192, 100, 3).cast<float>();
  const Mat<float> xq = gaussian(64, 100, 4).cast<float>();
  const Vec<float> yc = Vec<float>::Zero(192);
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, xc, yc, xq, TaskKind::classification));
}
BENCHMARK(BM_Forward)->Args({3, 32})->Args({4, 64})->Args({6, 256})->Unit(benchmark::kMillisecond);

static void BM_ForwardBackward(benchmark::State& state) {
  ModelConfig c;
  c.num_layers = static_cast<std::size_t>(state.range(0));
  c.dim = static_cast<std::size_t>(state.range(1));
  const auto p = init_params<float>(c, 1);
  const Mat<float> xc = gaussian(192, 100, 3).cast<float>();
  const Mat<float> xq = gaussian(64, 100, 4).cast<float>();
  Vec<float> yc(192);
  for (Eigen::Index i = 0; i < yc.size(); ++i) yc(i) = static_cast<float>(i % 3);
  std::vector<double> yq(64);
  for (std::size_t i = 0; i < yq.size(); ++i) yq[i] = static_cast<double>(i % 3);
  for (auto _ : state) {
    Tape<float> tape;
    const auto out = forward(p, xc, yc, xq, TaskKind::classification, &tape);
    const auto l = compute_loss(out, yq, TaskKind::classification, 3, 0.1);
    benchmark::DoNotOptimize(backward(p, tape, l.grad));
  }
}
BENCHMARK(BM_ForwardBackward)->Args({3, 32})->Args({4, 64})->Unit(benchmark::kMillisecond);

static void BM_Predict(benchmark::State& state) {
  ModelConfig c;
  const auto p = init_params<float>(c, 1);
  SupervisedView train;
  train.X = gaussian(2000, 10, 5);
  train.y.resize(2000);
  for (std::size_t i = 0; i < train.y.size(); ++i) train.y[i] = static_cast<double>(i % 2);
  train.kind = TaskKind::classification;
  train.num_classes = 2;
  const MatrixXdR test = gaussian(16, 10, 6);
  InferOptions o;
  o.context_size = static_cast<std::size_t>(state.range(0));
  o.ensembles = 1;
  for (auto _ : state) benchmark::DoNotOptimize(predict(p, train, test, o));
  state.SetItemsProcessed(state.iterations() * test.rows());
}
BENCHMARK(BM_Predict)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_ContamScan(benchmark::State& state) {
  std::vector<DatasetFingerprint> train, eval;
  for (std::uint64_t s = 0; s < static_cast<std::uint64_t>(state.range(0)); ++s) {
    train.push_back(fingerprint(synthetic::random_table(200, 8, s)));
    eval.push_back(fingerprint(synthetic::random_table(210, 8, 1000 + s)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(compare_all(train, eval));
}
BENCHMARK(BM_ContamScan)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
