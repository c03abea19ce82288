#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "scrap/annotation/split.hpp"
#include "scrap/common/error.hpp"
#include "scrap/pipeline/dataset_export.hpp"
#include "scrap/pipeline/events.hpp"
#include "scrap/pipeline/layer_store.hpp"
#include "scrap/pipeline/messages.hpp"
#include "scrap/pipeline/queue.hpp"
#include "scrap/pipeline/report.hpp"
#include "scrap/pipeline/service.hpp"
#include "support/fixtures.hpp"
#include "support/puppet.hpp"

using namespace scrap;
using namespace scrap::pipeline;
using scrap::testing::finalize_msg;
using scrap::testing::layer_msg;
using scrap::testing::puppet_model;
namespace fs = std::filesystem;
using nlohmann::json;

TEST(Messages, RoundTrip) {
  const auto m = layer_msg("RC-1", 2, 3, 1.5, {"BLUR"});
  const auto back = IngestMessage::from_json(m.to_json());
  EXPECT_EQ(back.to_json(), m.to_json());
  const auto e = scrap::testing::as_envelope(finalize_msg("RC-1", 2));
  const auto eb = Envelope::from_json(e.to_json());
  EXPECT_EQ(eb.kind, MessageKind::kFinalize);
  EXPECT_EQ(eb.dedupe_id(), "RC-1:END");
}

TEST(Messages, SchemaViolationsNameTheField) {
  const json good = layer_msg("RC-1", 1, 0, 1.0).to_json();
  auto expect_field = [](json j, const std::string& field) {
    try {
      IngestMessage::from_json(j);
      ADD_FAILURE() << "accepted " << j.dump();
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  for (const char* f : {"dedupe_id", "line", "railcar_id", "layer_index", "features", "timestamp_ms"}) {
    auto j = good;
    j.erase(f);
    expect_field(j, f);
  }
  auto j = good;
  j["line"] = "one";
  expect_field(j, "line");
  j = good;
  j["line"] = 0;
  expect_field(j, "line");
  j = good;
  j["features"] = json::array();
  expect_field(j, "features");
  j = good;
  j["features"] = {1.0, "x"};
  expect_field(j, "features");
  j = good;
  j["schema_version"] = 2;
  expect_field(j, "schema_version");
  j = good;
  j["quality_flags"] = {"SMUDGE"};
  expect_field(j, "quality flag");
  EXPECT_THROW(Envelope::from_json({{"kind", "other"}}), DataError);
  EXPECT_THROW(IngestMessage::from_json(json::array()), DataError);
}

TEST(Messages, ChaosKeepsFirstDeliveryOrder) {
  std::vector<Envelope> msgs;
  for (int i = 0; i < 200; ++i) msgs.push_back(scrap::testing::as_envelope(layer_msg("RC-" + std::to_string(i % 7), 1 + i % 7, i, 1.0)));
  const auto chaos = chaos_deliveries(msgs, 3, 5);
  std::map<std::string, int> count;
  std::vector<std::string> first;
  for (const auto& e : chaos) {
    if (count[e.dedupe_id()]++ == 0) first.push_back(e.dedupe_id());
  }
  ASSERT_EQ(first.size(), msgs.size());
  for (std::size_t i = 0; i < msgs.size(); ++i) EXPECT_EQ(first[i], msgs[i].dedupe_id());
  for (const auto& [_, n] : count) {
    EXPECT_GE(n, 1);
    EXPECT_LE(n, 5);
  }
  EXPECT_GT(chaos.size(), msgs.size());
  EXPECT_EQ(chaos_deliveries(msgs, 3, 5).size(), chaos.size());
}

TEST(LayerStore, AcceptDuplicateReject) {
  LayerStore store(6);
  const auto m = layer_msg("RC-1", 2, 0, 1.0);
  EXPECT_EQ(store.insert(m).status, IngestStatus::kAccepted);
  EXPECT_EQ(store.record_count(), 1u);
  const auto before = store.snapshot();
  EXPECT_EQ(store.insert(m).status, IngestStatus::kDuplicate);
  EXPECT_EQ(store.snapshot(), before);

  EXPECT_EQ(store.insert(layer_msg("RC-2", 7, 0, 1.0)).status, IngestStatus::kRejected);
  // a railcar belongs to the line that first reported it
  EXPECT_EQ(store.insert(layer_msg("RC-1", 3, 1, 1.0)).status, IngestStatus::kRejected);
  auto relabeled = layer_msg("RC-1", 2, 0, 9.0);
  relabeled.dedupe_id = "other";
  EXPECT_EQ(store.insert(relabeled).status, IngestStatus::kRejected);

  EXPECT_EQ(store.mark_finalized(finalize_msg("RC-9", 2)).status, IngestStatus::kRejected);
  EXPECT_EQ(store.mark_finalized(finalize_msg("RC-1", 2)).status, IngestStatus::kAccepted);
  EXPECT_EQ(store.mark_finalized(finalize_msg("RC-1", 2)).status, IngestStatus::kDuplicate);
  EXPECT_EQ(store.insert(layer_msg("RC-1", 2, 5, 1.0)).status, IngestStatus::kRejected);
  EXPECT_EQ(store.record_count(), 1u);
}

TEST(LayerStore, WalRecoveryToleratesTornTail) {
  scrap::testing::TempDir dir("wal");
  std::string snap;
  {
    LayerStore store(2, dir.path());
    for (std::size_t i = 0; i < 3; ++i) store.insert(layer_msg("RC-1", 1, i, 0.5 * i));
    store.insert(layer_msg("RC-2", 2, 0, 2.0));
    store.mark_finalized(finalize_msg("RC-2", 2));
    snap = store.snapshot();
  }
  { std::ofstream(dir / "line-1.wal.jsonl", std::ios::app) << R"({"kind":"layer","dedupe_id":"RC-1:L9)"; }
  LayerStore again(2, dir.path());
  EXPECT_EQ(again.snapshot(), snap);
  EXPECT_EQ(again.record_count(), 4u);
  EXPECT_EQ(again.insert(layer_msg("RC-1", 1, 1, 0.5)).status, IngestStatus::kDuplicate);
  EXPECT_TRUE(again.railcar("RC-2")->finalized.has_value());
}

TEST(LayerStore, WalCorruptionBeforeTailIsFatal) {
  scrap::testing::TempDir dir("wal-bad");
  {
    LayerStore store(1, dir.path());
    store.insert(layer_msg("RC-1", 1, 0, 1.0));
  }
  {
    std::ifstream in(dir / "line-1.wal.jsonl");
    std::string good;
    std::getline(in, good);
    in.close();
    std::ofstream out(dir / "line-1.wal.jsonl", std::ios::trunc);
    out << "{garbage\n" << good << "\n";
  }
  EXPECT_THROW(LayerStore(1, dir.path()), IntegrityError);
}

TEST(Policy, TriggerTable) {
  const EscalationPolicy p;
  auto flags = [&](std::optional<double> c, double reg, std::optional<double> cls, bool roi) {
    return escalation_triggers(p, {c, reg, cls, roi});
  };
  EXPECT_TRUE(flags(1.0, 0.9, 0.9, true).empty());
  EXPECT_EQ(flags(3.1, 0.9, 0.9, true), std::vector<std::string>{kHighContamination});
  EXPECT_TRUE(flags(2.0, 0.9, 0.9, true).empty());  // strictly above
  EXPECT_EQ(flags(1.0, 0.3, 0.9, true), std::vector<std::string>{kLowConfidence});
  EXPECT_EQ(flags(1.0, 0.9, 0.3, true), std::vector<std::string>{kLowConfidence});
  EXPECT_TRUE(flags(1.0, 0.5, 0.5, true).empty());
  EXPECT_EQ(flags(std::nullopt, 1.0, std::nullopt, true), std::vector<std::string>{kNoEligibleLayers});
  EXPECT_EQ(flags(3.0, 0.1, 0.9, false),
            (std::vector<std::string>{kHighContamination, kLowConfidence, kRoiNonconformant}));
}

TEST(Policy, RandomInputsMatchOracle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 5000; ++t) {
    EscalationPolicy p;
    p.contamination_threshold = 5 * u(rng);
    p.confidence_threshold = u(rng);
    PolicyInput in;
    if (u(rng) < 0.9) in.contamination = 6 * u(rng);
    in.reg_conf = u(rng);
    if (u(rng) < 0.5) in.cls_conf = u(rng);
    in.roi_conformant = u(rng) < 0.8;
    std::set<std::string> want;
    if (!in.contamination) {
      want.insert(kNoEligibleLayers);
    } else {
      if (*in.contamination > p.contamination_threshold) want.insert(kHighContamination);
      const double conf = in.cls_conf ? std::min(in.reg_conf, *in.cls_conf) : in.reg_conf;
      if (conf < p.confidence_threshold) want.insert(kLowConfidence);
    }
    if (!in.roi_conformant) want.insert(kRoiNonconformant);
    const auto got = escalation_triggers(p, in);
    EXPECT_EQ(std::set<std::string>(got.begin(), got.end()), want);
  }
}

namespace {

struct ServiceFixture {
  ServiceConfig cfg;
  std::unique_ptr<PipelineService> svc;

  explicit ServiceFixture(std::optional<fs::path> dir = {}) {
    cfg.data_dir = dir;
    svc = std::make_unique<PipelineService>(cfg, puppet_model(), "hash-1");
  }

  RailcarReport run(const std::string& car, int line, const std::vector<double>& features,
                    const std::vector<std::vector<std::string>>& flags = {}) {
    for (std::size_t i = 0; i < features.size(); ++i) {
      const auto f = i < flags.size() ? flags[i] : std::vector<std::string>{};
      EXPECT_EQ(svc->ingest_layer(layer_msg(car, line, i, features[i], f)).status, IngestStatus::kAccepted);
    }
    auto out = svc->finalize_railcar(finalize_msg(car, line));
    EXPECT_EQ(out.result.status, IngestStatus::kAccepted) << out.result.reason;
    return *out.report;
  }
};

}  // namespace

TEST(Finalize, NominalRailcarIsAuto) {
  ServiceFixture f;
  const auto r = f.run("RC-1", 1, std::vector<double>(10, 1.0));
  EXPECT_EQ(r.status, ReportStatus::kAuto);
  EXPECT_EQ(r.layer_count, 10u);
  EXPECT_EQ(r.eligible_layer_count, 10u);
  EXPECT_NEAR(*r.contamination, 1.0, 1e-12);
  EXPECT_EQ(*r.grade, "3A");
  EXPECT_DOUBLE_EQ(r.reg_conf, 1.0);
  EXPECT_TRUE(r.flags.empty());
  EXPECT_EQ(r.model_version, "1");
  EXPECT_EQ(r.checkpoint_hash, "hash-1");
  EXPECT_EQ(r.first_layer_ms, 1000);
  EXPECT_EQ(r.last_layer_ms, 1009);
  EXPECT_EQ(r.finalized_ms, 5000);
  EXPECT_EQ(f.svc->layer_predictions("RC-1").size(), 10u);
}

TEST(Finalize, HighContaminationEscalates) {
  ServiceFixture f;
  const auto r = f.run("RC-1", 1, std::vector<double>(5, 3.1));
  EXPECT_NEAR(*r.contamination, 3.1, 1e-12);
  EXPECT_EQ(r.status, ReportStatus::kEscalated);
  EXPECT_EQ(r.flags, std::vector<std::string>{kHighContamination});
}

TEST(Finalize, LowConfidenceEscalates) {
  ServiceFixture f;
  // per-layer estimates 0 and 2.4: σ_pop 1.2, confidence 1 - 1.2/2 = 0.4
  const auto r = f.run("RC-1", 1, {0.0, 2.4});
  EXPECT_NEAR(r.reg_conf, 0.4, 1e-12);
  EXPECT_EQ(r.status, ReportStatus::kEscalated);
  EXPECT_EQ(r.flags, std::vector<std::string>{kLowConfidence});
  EXPECT_NEAR(r.layer_reg_conf->min, 0.4, 1e-12);
}

TEST(Finalize, NoEligibleLayers) {
  ServiceFixture f;
  const auto r = f.run("RC-1", 1, {1.0, 1.0}, {{"BLUR"}, {"OCCLUDED"}});
  EXPECT_EQ(r.status, ReportStatus::kEscalated);
  EXPECT_FALSE(r.contamination.has_value());
  EXPECT_TRUE(r.has_flag(kNoEligibleLayers));
  EXPECT_TRUE(r.has_flag(kQualityRejectedLayers));
}

TEST(Finalize, RejectedLayersAreInformational) {
  ServiceFixture f;
  const auto r = f.run("RC-1", 1, {1.0, 50.0, 1.0}, {{}, {"BLUR"}, {}});
  EXPECT_EQ(r.status, ReportStatus::kAuto);
  EXPECT_NEAR(*r.contamination, 1.0, 1e-12);  // the blurred layer never enters the bag
  EXPECT_EQ(r.flags, std::vector<std::string>{kQualityRejectedLayers});
}

TEST(Finalize, RoiNonconformantEscalates) {
  ServiceFixture f;
  const auto r = f.run("RC-1", 1, {1.0, 1.0}, {{kRoiFlag}, {kRoiFlag}});
  EXPECT_EQ(r.status, ReportStatus::kEscalated);
  EXPECT_TRUE(r.has_flag(kRoiNonconformant));
}

TEST(Finalize, RepeatedEndSignalReturnsStoredReport) {
  ServiceFixture f;
  const auto r = f.run("RC-1", 1, {3.0});
  const auto again = f.svc->finalize_railcar(finalize_msg("RC-1", 1));
  EXPECT_EQ(again.result.status, IngestStatus::kDuplicate);
  EXPECT_EQ(again.report->to_json(), r.to_json());
  std::size_t created = 0, escalated = 0;
  for (const auto& e : f.svc->events().since(0)) {
    created += e.type == kReportCreated;
    escalated += e.type == kReportEscalated;
  }
  EXPECT_EQ(created, 1u);
  EXPECT_EQ(escalated, 1u);
}

TEST(Finalize, WrongFeatureWidthRejected) {
  ServiceFixture f;
  auto m = layer_msg("RC-1", 1, 0, 1.0);
  m.features = {1.0, 2.0};
  EXPECT_EQ(f.svc->ingest_layer(m).status, IngestStatus::kRejected);
}

namespace {

OverrideRequest override_req(const std::string& field, json value, const std::string& rationale,
                             const std::string& role = "inspector") {
  return {"RC-1", "op-7", role, field, std::move(value), rationale, 42};
}

}  // namespace

TEST(Override, GradeWithMisgraded) {
  ServiceFixture f;
  f.run("RC-1", 1, {1.0});
  const auto audit_before = f.svc->audit().size();
  const auto r = f.svc->apply_override(override_req("grade", "3A1", "MISGRADED"));
  EXPECT_EQ(*r.grade, "3A1");
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0]["grade"], "3A");
  EXPECT_EQ(r.status, ReportStatus::kOverridden);
  EXPECT_EQ(f.svc->audit().size(), audit_before + 1);
  EXPECT_EQ(f.svc->audit().events().back().action, "OVERRIDE");
  EXPECT_EQ(f.svc->report("RC-1")->grade, "3A1");
  EXPECT_EQ(f.svc->events().since(0).back().type, kReportUpdated);
}

TEST(Override, Rejections) {
  ServiceFixture f;
  f.run("RC-1", 1, {1.0});
  EXPECT_THROW(f.svc->apply_override(override_req("grade", "3A1", "")), DataError);
  EXPECT_THROW(f.svc->apply_override(override_req("grade", "3A1", "BECAUSE")), DataError);
  EXPECT_THROW(f.svc->apply_override(override_req("grade", "3A1", "MISGRADED", "visitor")), Unauthorized);
  EXPECT_THROW(f.svc->apply_override(override_req("grade", "BRASS", "MISGRADED")), DataError);
  EXPECT_THROW(f.svc->apply_override(override_req("contamination", 140.0, "OTHER")), DataError);
  EXPECT_THROW(f.svc->apply_override(override_req("line", 3, "OTHER")), DataError);
  auto missing = override_req("grade", "3A1", "MISGRADED");
  missing.railcar_id = "RC-404";
  EXPECT_THROW(f.svc->apply_override(missing), NotFound);
  EXPECT_EQ(f.svc->report("RC-1")->status, ReportStatus::kAuto);
  EXPECT_TRUE(f.svc->report("RC-1")->history.empty());
}

TEST(Override, SequentialOverridesKeepHistory) {
  ServiceFixture f;
  f.run("RC-1", 1, {1.0});
  f.svc->apply_override(override_req("contamination", 1.8, "CONTAMINATION_UNDERESTIMATED"));
  const auto r = f.svc->apply_override(override_req("contamination", 2.2, "CONTAMINATION_UNDERESTIMATED"));
  EXPECT_EQ(r.history.size(), 2u);
  EXPECT_EQ(*r.contamination, 2.2);
  EXPECT_NEAR(r.history[0]["contamination"].get<double>(), 1.0, 1e-12);
  EXPECT_EQ(r.history[1]["contamination"].get<double>(), 1.8);
  EXPECT_EQ(r.overrides.size(), 2u);
}

TEST(Override, StatusMachine) {
  EXPECT_EQ(status_after_override(ReportStatus::kEscalated, Role::kSenior), ReportStatus::kAdjudicated);
  EXPECT_EQ(status_after_override(ReportStatus::kEscalated, Role::kInspector), ReportStatus::kOverridden);
  EXPECT_EQ(status_after_override(ReportStatus::kAuto, Role::kSenior), ReportStatus::kOverridden);
  EXPECT_EQ(status_after_override(ReportStatus::kOverridden, Role::kInspector), ReportStatus::kOverridden);
  for (auto s : {ReportStatus::kAuto, ReportStatus::kEscalated, ReportStatus::kOverridden, ReportStatus::kAdjudicated})
    for (auto role : {Role::kInspector, Role::kSenior}) EXPECT_NE(status_after_override(s, role), ReportStatus::kAuto);

  ServiceFixture f;
  f.run("RC-1", 1, {3.5});
  EXPECT_EQ(f.svc->apply_override(override_req("contamination", 3.0, "OTHER", "senior")).status,
            ReportStatus::kAdjudicated);
}

TEST(ActiveLearning, Ranking) {
  auto ids = [](const std::vector<QueueEntry>& v) {
    std::vector<std::string> out;
    for (const auto& e : v) out.push_back(e.railcar_id);
    return out;
  };
  EXPECT_EQ(ids(active_learning_rank({{"a", false, 0.9, 1}, {"b", false, 0.4, 1}})),
            (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(ids(active_learning_rank({{"a", false, 0.2, 1}, {"b", true, 0.8, 1}})),
            (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(ids(active_learning_rank({{"a", false, 0.5, 1}, {"b", false, 0.5, 1}, {"c", false, 0.5, 1}})),
            (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(ids(active_learning_rank({{"a", false, 0.5, 1}, {"b", false, 0.5, 3}})),
            (std::vector<std::string>{"b", "a"}));
}

TEST(ActiveLearning, ServiceQueuePutsCorrectionsFirst) {
  ServiceFixture f;
  f.run("RC-1", 1, {1.0});
  f.run("RC-2", 2, {0.0, 2.4});
  EXPECT_EQ(f.svc->active_learning_queue().front().railcar_id, "RC-2");
  f.svc->apply_override(override_req("grade", "3AH", "MISGRADED"));
  EXPECT_EQ(f.svc->active_learning_queue().front().railcar_id, "RC-1");
}

TEST(EventHub, GaplessCursorAndClose) {
  EventHub hub;
  for (int i = 0; i < 5; ++i) EXPECT_EQ(hub.publish("t", "s", {{"i", i}}), static_cast<std::uint64_t>(i + 1));
  const auto tail = hub.since(2);
  ASSERT_EQ(tail.size(), 3u);
  EXPECT_EQ(tail[0].id, 3u);
  EXPECT_EQ(hub.since(0, 2).size(), 2u);
  EXPECT_EQ(tail[0].sse_frame().rfind("id: 3\nevent: t\ndata: ", 0), 0u);

  EXPECT_TRUE(hub.wait_since(5, std::chrono::milliseconds(20)).empty());
  std::thread later([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    hub.publish("t", "s", {});
  });
  const auto got = hub.wait_since(5, std::chrono::seconds(5));
  later.join();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].id, 6u);

  std::thread closer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    hub.close();
  });
  const auto start = std::chrono::steady_clock::now();
  EXPECT_TRUE(hub.wait_since(6, std::chrono::seconds(10)).empty());
  closer.join();
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(5));
  EXPECT_TRUE(hub.closed());
}

TEST(Queue, PerLineOrderAndRejections) {
  std::mutex mu;
  std::map<int, std::vector<std::size_t>> seen;
  PartitionedQueue q(3, [&](const Envelope& e, PartitionedQueue::Clock::time_point) {
    std::lock_guard lock(mu);
    seen[e.line()].push_back(e.layer.layer_index);
    return IngestResult::accepted();
  });
  std::vector<std::future<IngestResult>> fs;
  for (std::size_t i = 0; i < 300; ++i)
    fs.push_back(q.submit(scrap::testing::as_envelope(layer_msg("RC", 1 + int(i % 3), i, 0))));
  auto bad = q.submit(scrap::testing::as_envelope(layer_msg("RC", 9, 0, 0)));
  EXPECT_EQ(bad.get().status, IngestStatus::kRejected);
  for (auto& f : fs) EXPECT_EQ(f.get().status, IngestStatus::kAccepted);
  q.drain();
  EXPECT_EQ(q.pending(), 0u);
  for (const auto& [line, idx] : seen) {
    EXPECT_EQ(idx.size(), 100u);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end())) << "line " << line;
  }
  q.stop();
  EXPECT_EQ(q.submit(scrap::testing::as_envelope(layer_msg("RC", 1, 0, 0))).get().status, IngestStatus::kRejected);
}

namespace {

std::map<std::string, std::string> reports_by_railcar(PipelineService& svc) {
  std::map<std::string, std::string> out;
  for (const auto& r : svc.reports()) out[r.railcar_id] = r.to_json().dump();
  return out;
}

std::vector<Envelope> small_stream(std::uint64_t seed) {
  sim::CampaignConfig cfg;
  cfg.split_counts = {20, 5, 5};
  cfg.feature_dim = 1;
  cfg.seed = seed;
  return campaign_messages(sim::gen_campaign(cfg));
}

void feed(PipelineService& svc, const std::vector<Envelope>& msgs) {
  std::vector<std::future<IngestResult>> fs;
  for (const auto& e : msgs) fs.push_back(svc.submit(e));
  for (auto& f : fs) f.get();
  svc.drain();
}

}  // namespace

TEST(Isolation, CorruptLineLeavesOthersUntouched) {
  const auto msgs = small_stream(3);
  ServiceFixture clean, dirty;
  feed(*clean.svc, msgs);

  auto corrupted = msgs;
  std::mt19937_64 rng(5);
  for (auto& e : corrupted) {
    if (e.line() != 2) continue;
    if (e.kind == MessageKind::kLayer) {
      e.layer.features = rng() % 2 ? std::vector<double>{99.0} : std::vector<double>{1.0, 2.0};
      if (rng() % 3 == 0) e.layer.line = 4;  // misrouted onto another line
    } else if (rng() % 2) {
      e.finalize.railcar_id += "-ghost";
    }
  }
  feed(*dirty.svc, corrupted);

  const auto a = reports_by_railcar(*clean.svc);
  const auto b = reports_by_railcar(*dirty.svc);
  std::size_t compared = 0;
  for (const auto& [id, rep] : a) {
    if (json::parse(rep).at("line") == 2) continue;
    ASSERT_TRUE(b.count(id)) << id;
    EXPECT_EQ(b.at(id), rep) << id;
    ++compared;
  }
  EXPECT_GT(compared, 15u);
}

TEST(Service, RestartRecoversStateFromDataDir) {
  scrap::testing::TempDir dir("svc");
  const auto msgs = small_stream(4);
  std::string layers, reports;
  {
    ServiceFixture f(dir.path());
    feed(*f.svc, msgs);
    f.svc->apply_override({msgs.front().railcar_id(), "op", "inspector", "grade", "3AH", "MISGRADED", 1});
    layers = f.svc->layer_snapshot();
    reports = f.svc->report_snapshot();
  }
  ServiceFixture again(dir.path());
  EXPECT_EQ(again.svc->layer_snapshot(), layers);
  EXPECT_EQ(again.svc->report_snapshot(), reports);
  feed(*again.svc, msgs);  // full replay after restart changes nothing
  EXPECT_EQ(again.svc->report_snapshot(), reports);
}

TEST(Service, PolicyUpdates) {
  ServiceFixture f;
  f.run("RC-1", 1, {1.5});
  EXPECT_THROW(f.svc->update_policy(1.0, 0.5, "op", Role::kInspector), Unauthorized);
  EXPECT_THROW(f.svc->update_policy(-1.0, 0.5, "boss", Role::kSenior), DataError);
  const auto p = f.svc->update_policy(1.0, 0.5, "boss", Role::kSenior);
  EXPECT_EQ(p.version, 2);
  EXPECT_EQ(f.svc->policy_history().size(), 2u);
  EXPECT_EQ(f.svc->report("RC-1")->policy_version, 1);
  EXPECT_EQ(f.svc->report("RC-1")->status, ReportStatus::kAuto);
  const auto r = f.run("RC-2", 2, {1.5});
  EXPECT_EQ(r.policy_version, 2);
  EXPECT_EQ(r.status, ReportStatus::kEscalated);
}

TEST(Service, RetiredModelVersionRefused) {
  ServiceConfig cfg;
  cfg.retired_versions = {"1"};
  EXPECT_THROW(PipelineService(cfg, puppet_model("1"), "h"), ConfigError);
  EXPECT_THROW(PipelineService(ServiceConfig{}, puppet_model(""), "h"), IntegrityError);
  PipelineService ok(cfg, puppet_model("2"), "h");
  EXPECT_TRUE(ok.version_retired("1"));
  EXPECT_EQ(ok.health().at("model_version"), "2");
  EXPECT_EQ(ok.health().at("checkpoint_hash"), "h");
}

TEST(ReportStore, RebuildsFromLog) {
  scrap::testing::TempDir dir("reports");
  RailcarReport r;
  r.railcar_id = "RC-1";
  r.contamination = 1.0;
  r.model_version = "1";
  {
    ReportStore store(dir / "reports.jsonl");
    EXPECT_TRUE(store.create(r).second);
    EXPECT_FALSE(store.create(r).second);
    auto upd = r;
    upd.contamination = 2.0;
    upd.status = ReportStatus::kOverridden;
    store.record_override(upd, OverrideEvent{"RC-1", "op", Role::kInspector, "contamination", 1.0, 2.0,
                                             Rationale::kOther, 3});
  }
  ReportStore again(dir / "reports.jsonl");
  ASSERT_EQ(again.size(), 1u);
  EXPECT_EQ(*again.get("RC-1")->contamination, 2.0);
  EXPECT_EQ(again.get("RC-1")->status, ReportStatus::kOverridden);
}

TEST(ReportJson, RoundTrip) {
  ServiceFixture f;
  f.run("RC-1", 1, {0.0, 2.4}, {{}, {}});
  f.svc->apply_override(override_req("grade", "3AH", "MISGRADED"));
  const auto r = *f.svc->report("RC-1");
  EXPECT_EQ(RailcarReport::from_json(r.to_json()).to_json(), r.to_json());
}

namespace {

std::vector<annotation::LabeledRow> labels_for(const LayerStore& store, std::size_t skip_every) {
  std::vector<annotation::LabeledRow> rows;
  std::size_t i = 0;
  for (const auto& id : store.railcar_ids()) {
    if (skip_every && ++i % skip_every == 0) continue;
    rows.push_back({id, "bl-" + id, 1.0, "3A", 0.1, "consensus"});
  }
  return rows;
}

}  // namespace

TEST(Export, ImmutableTagsAndCounts) {
  LayerStore store(6);
  for (const auto& e : small_stream(6)) {
    if (e.kind == MessageKind::kLayer) store.insert(e.layer);
  }
  // one railcar with nothing eligible never becomes a row
  store.insert(layer_msg("RC-dark", 1, 0, 1.0, {"BLUR"}));
  auto labels = labels_for(store, 4);
  labels.push_back({"RC-dark", "bl-dark", 1.0, "3A", 0.0, "consensus"});

  std::size_t eligible = 0;
  for (const auto& id : store.railcar_ids()) {
    bool labeled = false;
    for (const auto& l : labels) labeled = labeled || l.railcar_id == id;
    bool any = false;
    const auto car = store.railcar(id);
    for (const auto& [_, m] : car->layers) any = any || m.eligible();
    eligible += labeled && any;
  }

  scrap::testing::TempDir root("export");
  const auto ratios = annotation::reference_split_ratios();
  const auto a = export_dataset("v1", store, labels, ratios, 9, root.path());
  EXPECT_EQ(a.rows, eligible);
  EXPECT_FALSE(a.reused);
  const auto b = export_dataset("v1", store, labels, ratios, 9, root.path());
  EXPECT_EQ(b.digest, a.digest);
  EXPECT_TRUE(b.reused);

  // partitions agree with an independent split of the same railcars
  std::ifstream in(root / "v1" / "rows.jsonl");
  std::vector<std::string> ids;
  std::map<std::string, std::string> part;
  for (std::string line; std::getline(in, line);) {
    const auto j = json::parse(line);
    ids.push_back(j.at("railcar_id"));
    part[j.at("railcar_id")] = j.at("partition");
  }
  EXPECT_EQ(ids.size(), eligible);
  const auto split = annotation::split_by_railcar(ids, ratios, 9);
  for (const auto& [id, p] : split.railcar_partition) EXPECT_EQ(part.at(id), annotation::to_string(p));

  labels.erase(labels.begin());
  EXPECT_THROW(export_dataset("v1", store, labels, ratios, 9, root.path()), TagCollision);
  EXPECT_THROW(export_dataset("../x", store, labels, ratios, 9, root.path()), ConfigError);
}
