#include <benchmark/benchmark.h>

#include <random>

#include "scrap/segmentation/segmenter.hpp"
#include "scrap/sim/campaign.hpp"

namespace {

void BM_SegmentGrabs(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto trace = scrap::sim::gen_iou_trace(static_cast<std::size_t>(state.range(0)), 15, 0.02, rng);
  for (auto _ : state) benchmark::DoNotOptimize(scrap::segmentation::segment_grabs(trace.values));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(trace.values.size()));
}
BENCHMARK(BM_SegmentGrabs)->Arg(5)->Arg(14)->Arg(200);

// Full per-railcar path: ROI check, IoU trace, hysteresis, keyframes.
void BM_SegmentTrack(benchmark::State& state) {
  scrap::sim::CampaignConfig cfg;
  cfg.split_counts = {1, 0, 0};
  const auto campaign = scrap::sim::gen_campaign(cfg);
  const auto& track = campaign.railcars.front().track;
  for (auto _ : state)
    benchmark::DoNotOptimize(scrap::segmentation::segment_track(track, scrap::sim::default_roi()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(track.entries.size()));
}
BENCHMARK(BM_SegmentTrack);

void BM_Iou(benchmark::State& state) {
  const scrap::segmentation::Box a{0, 0, 10, 10}, b{5, 5, 10, 10};
  for (auto _ : state) benchmark::DoNotOptimize(scrap::segmentation::iou(a, b));
}
BENCHMARK(BM_Iou);

}  // namespace
