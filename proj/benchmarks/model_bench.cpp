#include <benchmark/benchmark.h>

#include "nco/dataset.hpp"
#include "nco/decoding.hpp"
#include "nco/model.hpp"
#include "nco/training.hpp"

namespace m = nco::model;
namespace tsp = nco::tsp;

namespace {

m::ModelConfig config(int depth, int width) { return {depth, width, 4, width / 4, 4 * width, true, true}; }

void BM_Forward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto params = m::ModelParams::initialize(config(static_cast<int>(state.range(1)), 32), 1);
  const auto inst = tsp::generate(tsp::Distribution::kUniform, n, 3);
  m::Predictor pred(params, n);
  auto st = m::ConstructionState::begin(n, 0);
  for (auto _ : state) benchmark::DoNotOptimize(pred.probabilities(inst.coords, st));
}
BENCHMARK(BM_Forward)->Args({10, 2})->Args({10, 4})->Args({50, 2})->Args({100, 2});

void BM_GreedyTour(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto params = m::ModelParams::initialize(config(2, 32), 1);
  const auto inst = tsp::generate(tsp::Distribution::kUniform, n, 5);
  m::Predictor pred(params, n);
  for (auto _ : state) benchmark::DoNotOptimize(nco::decode::greedy(pred, inst));
}
BENCHMARK(BM_GreedyTour)->Arg(10)->Arg(50);

void BM_BeamTour(benchmark::State& state) {
  const auto params = m::ModelParams::initialize(config(2, 32), 1);
  const auto inst = tsp::generate(tsp::Distribution::kUniform, 20, 5);
  m::Predictor pred(params, 20);
  const int width = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(nco::decode::beam(pred, inst, width));
}
BENCHMARK(BM_BeamTour)->Arg(1)->Arg(4)->Arg(16);

void BM_TrainStep(benchmark::State& state) {
  const auto data = tsp::generate_dataset(tsp::Distribution::kUniform, 10, 64, 7, tsp::LabelKind::kHeldKarp, 1);
  auto cfg = nco::train::TrainConfig::desk();
  cfg.batch_size = 64;
  auto params = m::ModelParams::initialize(config(2, 32), 1);
  auto opt = nco::train::OptimizerState::zeros(params.config);
  nco::Rng rng(1);
  std::vector<const tsp::TspInstance*> ptrs;
  std::vector<nco::train::Sample> samples;
  for (const auto& inst : data) {
    ptrs.push_back(&inst);
    samples.push_back(nco::train::sample_partial(*inst.ref_tour, rng));
  }
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(nco::train::train_step(params, opt, ptrs, samples, cfg, threads));
  state.SetItemsProcessed(state.iterations() * cfg.batch_size);
}
BENCHMARK(BM_TrainStep)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
