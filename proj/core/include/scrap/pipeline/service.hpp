#pragma once

#include <chrono>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scrap/annotation/audit.hpp"
#include "scrap/annotation/engine.hpp"
#include "scrap/mil/model.hpp"
#include "scrap/pipeline/events.hpp"
#include "scrap/pipeline/layer_store.hpp"
#include "scrap/pipeline/queue.hpp"
#include "scrap/pipeline/report.hpp"

namespace scrap::pipeline {

struct ServiceConfig {
  std::size_t lines = 6;
  // WAL, report log and audit log live here; unset keeps everything in
  // memory.
  std::optional<std::filesystem::path> data_dir;
  bool fsync = false;
  EscalationPolicy policy;
  std::vector<std::string> retired_versions;
  std::string host = "127.0.0.1";
  int port = 8080;

  void validate() const;
  nlohmann::json to_json() const;
  static ServiceConfig from_json(const nlohmann::json& j);
};

struct LatencyStats {
  std::size_t count = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;

  nlohmann::json to_json() const;
};

struct FinalizeOutcome {
  IngestResult result;
  std::optional<RailcarReport> report;
};

// The production loop behind the HTTP API: exactly-once ingestion with
// per-layer inference, railcar finalization into reports, escalation,
// overrides, the active-learning queue and the operator event stream.
class PipelineService {
 public:
  PipelineService(ServiceConfig cfg, mil::MilModel model, std::string checkpoint_hash,
                  annotation::AnnotationEngine* annotations = nullptr);
  ~PipelineService();
  PipelineService(const PipelineService&) = delete;
  PipelineService& operator=(const PipelineService&) = delete;

  const ServiceConfig& config() const { return cfg_; }
  const std::string& model_version() const { return model_.version; }
  const std::string& checkpoint_hash() const { return checkpoint_hash_; }
  bool version_retired(const std::string& version) const;

  /// Direct, synchronous paths. Ordering across calls is the caller's.
  IngestResult ingest_layer(const IngestMessage& msg);
  /// Idempotent: a repeated end signal returns the stored report.
  FinalizeOutcome finalize_railcar(const FinalizeMessage& msg);

  /// Through the per-line partition consumers.
  std::future<IngestResult> submit(Envelope e);
  void drain();
  /// Drains the partitions and closes the event stream.
  void shutdown();

  std::optional<RailcarReport> report(const std::string& railcar_id) const;
  std::vector<RailcarReport> reports() const;
  /// Throws NotFound, Unauthorized or DataError (missing/unknown rationale,
  /// bad field or value).
  RailcarReport apply_override(const OverrideRequest& req);
  std::vector<QueueEntry> active_learning_queue() const;

  EscalationPolicy policy() const;
  std::vector<EscalationPolicy> policy_history() const;
  /// Senior only; bumps the policy version. Existing reports keep theirs.
  EscalationPolicy update_policy(double contamination_threshold, double confidence_threshold,
                                 const std::string& operator_id, Role role);

  bool has_annotations() const { return annotations_ != nullptr; }
  std::vector<annotation::AnnotationRecord> flagged_annotations() const;
  /// Senior only.
  annotation::AnnotationRecord adjudicate(const std::string& blind_id,
                                          const annotation::SeniorLabel& label, Role role);

  EventHub& events() { return events_; }
  annotation::AuditLog& audit() { return *audit_; }
  LatencyStats latency() const;
  /// Latest per-layer contamination estimates for a railcar, by layer.
  std::map<std::size_t, double> layer_predictions(const std::string& railcar_id) const;
  nlohmann::json health() const;

  const LayerStore& layer_store() const { return *layers_; }
  std::string layer_snapshot() const { return layers_->snapshot(); }
  std::string report_snapshot() const { return reports_->snapshot(); }

 private:
  IngestResult handle(const Envelope& e, PartitionedQueue::Clock::time_point enqueued);
  IngestResult ingest_timed(const IngestMessage& msg, PartitionedQueue::Clock::time_point start);
  RailcarReport build_report(const RailcarLayers& car, const FinalizeMessage& msg) const;
  std::mutex& railcar_mutex(const std::string& railcar_id);

  ServiceConfig cfg_;
  mil::MilModel model_;
  bool multitask_;
  std::string checkpoint_hash_;
  annotation::AnnotationEngine* annotations_;
  std::chrono::steady_clock::time_point started_;

  std::unique_ptr<annotation::AuditLog> audit_;
  std::unique_ptr<LayerStore> layers_;
  std::unique_ptr<ReportStore> reports_;
  EventHub events_;

  mutable std::mutex policy_mu_;
  std::vector<EscalationPolicy> policies_;

  mutable std::mutex latency_mu_;
  std::vector<double> latency_ms_;
  std::map<std::string, std::map<std::size_t, double>> layer_predictions_;

  std::mutex locks_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> railcar_locks_;

  std::unique_ptr<PartitionedQueue> queue_;
};

}  // namespace scrap::pipeline
