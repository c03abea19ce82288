#include <benchmark/benchmark.h>

#include "scrap/mil/model.hpp"
#include "scrap/pipeline/layer_store.hpp"
#include "scrap/pipeline/messages.hpp"
#include "scrap/pipeline/service.hpp"
#include "scrap/sim/campaign.hpp"

namespace {

const std::vector<scrap::pipeline::Envelope>& stream() {
  static const auto msgs = [] {
    scrap::sim::CampaignConfig cfg;
    cfg.split_counts = {40, 10, 10};
    return scrap::pipeline::campaign_messages(scrap::sim::gen_campaign(cfg));
  }();
  return msgs;
}

// In-memory dedupe store: first deliveries then a full duplicate pass.
void BM_LayerStoreInsert(benchmark::State& state) {
  const auto& msgs = stream();
  for (auto _ : state) {
    scrap::pipeline::LayerStore store(6);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& e : msgs)
        if (e.kind == scrap::pipeline::MessageKind::kLayer) benchmark::DoNotOptimize(store.insert(e.layer));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * msgs.size()));
}
BENCHMARK(BM_LayerStoreInsert)->Unit(benchmark::kMillisecond);

// Ingest with per-layer inference plus finalization into reports.
void BM_ServiceIngest(benchmark::State& state) {
  const auto& msgs = stream();
  auto model = scrap::mil::MilModel::initialize({}, 21, {"3A", "3A1", "3AH", "CAST_IRON"});
  model.version = "1";
  for (auto _ : state) {
    scrap::pipeline::PipelineService svc({}, model, "bench");
    for (const auto& e : msgs) {
      if (e.kind == scrap::pipeline::MessageKind::kLayer)
        svc.ingest_layer(e.layer);
      else
        svc.finalize_railcar(e.finalize);
    }
    benchmark::DoNotOptimize(svc.reports());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(msgs.size()));
}
BENCHMARK(BM_ServiceIngest)->Unit(benchmark::kMillisecond);

void BM_ChaosReplay(benchmark::State& state) {
  const auto& msgs = stream();
  for (auto _ : state) benchmark::DoNotOptimize(scrap::pipeline::chaos_deliveries(msgs, 7, 5));
}
BENCHMARK(BM_ChaosReplay)->Unit(benchmark::kMillisecond);

}  // namespace
