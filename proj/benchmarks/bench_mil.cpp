#include <benchmark/benchmark.h>

#include <random>

#include "scrap/mil/model.hpp"
#include "scrap/mil/training.hpp"

namespace {

std::vector<std::vector<double>> instances(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto& v : out)
    for (auto& x : v) x = d(rng);
  return out;
}

void BM_ForwardBag(benchmark::State& state) {
  const auto model = scrap::mil::MilModel::initialize({}, 1);
  const auto bag = instances(static_cast<std::size_t>(state.range(0)), model.dims.feature_dim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(scrap::mil::forward_bag(model, bag));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBag)->Arg(1)->Arg(5)->Arg(14);

void BM_PredictBag(benchmark::State& state) {
  const auto model = scrap::mil::MilModel::initialize({}, 1, {"3A", "3A1", "3AH", "CAST_IRON"});
  const auto bag = instances(static_cast<std::size_t>(state.range(0)), model.dims.feature_dim, 3);
  for (auto _ : state) benchmark::DoNotOptimize(scrap::mil::predict_bag(model, bag));
}
BENCHMARK(BM_PredictBag)->Arg(5)->Arg(14);

// One epoch over 64 bags of 8..14 layers, batch 8.
void BM_TrainEpoch(benchmark::State& state) {
  scrap::mil::Dataset data;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> c(0.0, 5.0);
  for (std::size_t i = 0; i < 64; ++i) {
    scrap::mil::LabeledBag item;
    item.bag.railcar_id = "RC-" + std::to_string(i);
    const auto feats = instances(8 + i % 7, 32, 100 + i);
    for (std::size_t j = 0; j < feats.size(); ++j) item.bag.instances.push_back({j, feats[j], {}});
    item.label.contamination = c(rng);
    item.label.grade = i % 4;
    data.push_back(std::move(item));
  }
  scrap::mil::TrainingConfig cfg;
  cfg.epochs = 1;
  cfg.class_names = {"3A", "3A1", "3AH", "CAST_IRON"};
  cfg.lambda_cls = static_cast<double>(state.range(0));
  for (auto _ : state) {
    auto res = state.range(0) == 0 ? scrap::mil::train_mil(data, cfg) : scrap::mil::train_mtl(data, cfg);
    benchmark::DoNotOptimize(res);
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_TrainEpoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
