#include "scrap/pipeline/service.hpp"

#include <algorithm>
#include <cmath>

#include "scrap/common/digest.hpp"

namespace scrap::pipeline {

using nlohmann::json;
using Clock = PartitionedQueue::Clock;

void ServiceConfig::validate() const {
  if (lines == 0) throw ConfigError("service needs at least one line");
  if (port < 0 || port > 65535) throw ConfigError("port out of range");
  policy.validate();
}

json ServiceConfig::to_json() const {
  json j = {{"lines", lines},
            {"fsync", fsync},
            {"policy", policy.to_json()},
            {"retired_versions", retired_versions},
            {"host", host},
            {"port", port}};
  j["data_dir"] = data_dir ? json(data_dir->string()) : json();
  return j;
}

ServiceConfig ServiceConfig::from_json(const json& j) {
  ServiceConfig c;
  try {
    c.lines = j.value("lines", c.lines);
    c.fsync = j.value("fsync", c.fsync);
    if (j.contains("policy")) c.policy = EscalationPolicy::from_json(j.at("policy"));
    c.retired_versions = j.value("retired_versions", c.retired_versions);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    if (j.contains("data_dir") && !j.at("data_dir").is_null())
      c.data_dir = j.at("data_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("service config: ") + e.what());
  }
  c.validate();
  return c;
}

json LatencyStats::to_json() const {
  return {{"count", count}, {"mean_ms", mean_ms}, {"p50_ms", p50_ms}, {"p99_ms", p99_ms}, {"max_ms", max_ms}};
}

PipelineService::PipelineService(ServiceConfig cfg, mil::MilModel model, std::string checkpoint_hash,
                                 annotation::AnnotationEngine* annotations)
    : cfg_(std::move(cfg)),
      model_(std::move(model)),
      multitask_(model_.metadata.value("objective", std::string("mtl")) == "mtl"),
      checkpoint_hash_(std::move(checkpoint_hash)),
      annotations_(annotations),
      started_(std::chrono::steady_clock::now()) {
  cfg_.validate();
  if (model_.version.empty()) throw IntegrityError("model carries no version");
  if (version_retired(model_.version))
    throw ConfigError("model version " + model_.version + " is listed as retired");
  if (cfg_.data_dir) {
    std::filesystem::create_directories(*cfg_.data_dir);
    audit_ = std::make_unique<annotation::AuditLog>(*cfg_.data_dir / "audit.jsonl");
    layers_ = std::make_unique<LayerStore>(cfg_.lines, *cfg_.data_dir / "wal", cfg_.fsync);
    reports_ = std::make_unique<ReportStore>(*cfg_.data_dir / "reports.jsonl");
  } else {
    audit_ = std::make_unique<annotation::AuditLog>();
    layers_ = std::make_unique<LayerStore>(cfg_.lines);
    reports_ = std::make_unique<ReportStore>();
  }
  policies_.push_back(cfg_.policy);
  queue_ = std::make_unique<PartitionedQueue>(
      cfg_.lines, [this](const Envelope& e, Clock::time_point t) { return handle(e, t); });
}

PipelineService::~PipelineService() { shutdown(); }

bool PipelineService::version_retired(const std::string& version) const {
  return std::find(cfg_.retired_versions.begin(), cfg_.retired_versions.end(), version) !=
         cfg_.retired_versions.end();
}

std::mutex& PipelineService::railcar_mutex(const std::string& railcar_id) {
  std::lock_guard lock(locks_mu_);
  auto& slot = railcar_locks_[railcar_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

IngestResult PipelineService::handle(const Envelope& e, Clock::time_point enqueued) {
  if (e.kind == MessageKind::kLayer) return ingest_timed(e.layer, enqueued);
  return finalize_railcar(e.finalize).result;
}

IngestResult PipelineService::ingest_layer(const IngestMessage& msg) { return ingest_timed(msg, Clock::now()); }

IngestResult PipelineService::ingest_timed(const IngestMessage& msg, Clock::time_point start) {
  if (msg.features.size() != model_.dims.feature_dim)
    return IngestResult::rejected("feature vector has " + std::to_string(msg.features.size()) +
                                  " values, model expects " + std::to_string(model_.dims.feature_dim));
  auto result = layers_->insert(msg);
  if (result.status != IngestStatus::kAccepted || !msg.eligible()) return result;
  const std::vector<std::vector<double>> one{msg.features};
  const auto emb = mil::forward_bag(model_, one);
  const double estimate = mil::predict_reg(model_, emb.z);
  const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  std::lock_guard lock(latency_mu_);
  latency_ms_.push_back(ms);
  layer_predictions_[msg.railcar_id][msg.layer_index] = estimate;
  return result;
}

RailcarReport PipelineService::build_report(const RailcarLayers& car, const FinalizeMessage& msg) const {
  RailcarReport r;
  r.railcar_id = car.railcar_id;
  r.line = car.line;
  r.layer_count = car.layers.size();
  r.model_version = model_.version;
  r.checkpoint_hash = checkpoint_hash_;
  r.finalized_ms = msg.timestamp_ms;
  const auto policy = this->policy();
  r.policy_version = policy.version;

  std::vector<std::vector<double>> eligible;
  json iou = json::array();
  bool roi_ok = true;
  bool first = true;
  for (const auto& [_, m] : car.layers) {
    if (m.eligible()) eligible.push_back(m.features);
    if (std::find(m.quality_flags.begin(), m.quality_flags.end(), kRoiFlag) != m.quality_flags.end())
      roi_ok = false;
    iou.push_back(m.iou);
    r.first_layer_ms = first ? m.timestamp_ms : std::min(r.first_layer_ms, m.timestamp_ms);
    r.last_layer_ms = first ? m.timestamp_ms : std::max(r.last_layer_ms, m.timestamp_ms);
    first = false;
  }
  r.eligible_layer_count = eligible.size();
  r.iou_digest = sha256_hex(iou.dump());

  PolicyInput in;
  in.roi_conformant = roi_ok;
  if (!eligible.empty()) {
    const auto pred = mil::predict_bag(model_, eligible);
    r.contamination = std::clamp(pred.contamination, 0.0, 100.0);
    r.reg_conf = pred.confidence.regression;
    std::vector<double> layer_reg;
    for (double c : pred.instance_contamination)
      layer_reg.push_back(1.0 - std::min(1.0, std::abs(c - pred.contamination) / model_.sigma_ref));
    r.layer_reg_conf = summarize(layer_reg);
    if (multitask_) {
      r.grade = model_.class_names.at(pred.grade);
      for (std::size_t c = 0; c < pred.class_probs.size(); ++c)
        r.class_probs[model_.class_names[c]] = pred.class_probs[c];
      r.cls_conf = pred.confidence.classification;
      std::vector<double> layer_cls;
      for (const auto& f : eligible) {
        const std::vector<std::vector<double>> one{f};
        const auto probs = mil::predict_cls(model_, mil::forward_bag(model_, one).z);
        layer_cls.push_back(*std::max_element(probs.begin(), probs.end()));
      }
      r.layer_cls_conf = summarize(layer_cls);
    }
    in.contamination = r.contamination;
    in.reg_conf = r.reg_conf;
    in.cls_conf = r.cls_conf;
  }
  r.flags = escalation_triggers(policy, in);
  r.status = r.flags.empty() ? ReportStatus::kAuto : ReportStatus::kEscalated;
  if (eligible.size() < car.layers.size()) r.flags.push_back(kQualityRejectedLayers);
  return r;
}

FinalizeOutcome PipelineService::finalize_railcar(const FinalizeMessage& msg) {
  std::lock_guard guard(railcar_mutex(msg.railcar_id));
  FinalizeOutcome out;
  out.result = layers_->mark_finalized(msg);
  if (out.result.status == IngestStatus::kRejected) return out;
  if (out.result.status == IngestStatus::kDuplicate) {
    out.report = reports_->get(msg.railcar_id);
    if (out.report) return out;
  }
  const auto car = layers_->railcar(msg.railcar_id);
  const auto& end = car->finalized ? *car->finalized : msg;
  auto [report, created] = reports_->create(build_report(*car, end));
  out.report = report;
  if (created) {
    audit_->append("pipeline", "REPORT_CREATED", report.to_json());
    const json data = report.to_json();
    events_.publish(kReportCreated, report.railcar_id, data);
    if (report.status == ReportStatus::kEscalated) events_.publish(kReportEscalated, report.railcar_id, data);
  }
  return out;
}

std::future<IngestResult> PipelineService::submit(Envelope e) { return queue_->submit(std::move(e)); }

void PipelineService::drain() { queue_->drain(); }

void PipelineService::shutdown() {
  if (queue_) queue_->stop();
  events_.close();
}

std::optional<RailcarReport> PipelineService::report(const std::string& railcar_id) const {
  return reports_->get(railcar_id);
}

std::vector<RailcarReport> PipelineService::reports() const { return reports_->all(); }

RailcarReport PipelineService::apply_override(const OverrideRequest& req) {
  const Role role = role_from_string(req.role);
  if (req.operator_id.empty()) throw Unauthorized("operator id required");
  const Rationale rationale = rationale_from_string(req.rationale);
  std::lock_guard guard(railcar_mutex(req.railcar_id));
  auto current = reports_->get(req.railcar_id);
  if (!current) throw NotFound("no report for railcar " + req.railcar_id);
  RailcarReport r = *current;

  OverrideEvent ev;
  ev.railcar_id = r.railcar_id;
  ev.operator_id = req.operator_id;
  ev.role = role;
  ev.field = req.field;
  ev.new_value = req.new_value;
  ev.rationale = rationale;
  ev.timestamp_ms = req.timestamp_ms.value_or(annotation::wall_clock_ms());

  json prior = {{"status", to_string(r.status)},
                {"contamination", r.contamination ? json(*r.contamination) : json()},
                {"grade", r.grade ? json(*r.grade) : json()}};
  if (req.field == "grade") {
    if (!req.new_value.is_string()) throw DataError("grade override needs a string value");
    const auto g = req.new_value.get<std::string>();
    if (std::find(model_.class_names.begin(), model_.class_names.end(), g) == model_.class_names.end())
      throw DataError("unknown grade '" + g + "'");
    ev.old_value = prior["grade"];
    r.grade = g;
  } else if (req.field == "contamination") {
    if (!req.new_value.is_number()) throw DataError("contamination override needs a number");
    const double c = req.new_value.get<double>();
    if (!(c >= 0.0 && c <= 100.0)) throw DataError("contamination outside [0,100]");
    ev.old_value = prior["contamination"];
    r.contamination = c;
  } else {
    throw DataError("field '" + req.field + "' cannot be overridden");
  }
  prior["timestamp_ms"] = ev.timestamp_ms;
  r.history.push_back(std::move(prior));
  r.status = status_after_override(r.status, role);
  r.overrides.push_back(ev);
  reports_->record_override(r, ev);
  audit_->append(ev.operator_id, "OVERRIDE", ev.to_json());
  events_.publish(kReportUpdated, r.railcar_id, r.to_json());
  return r;
}

std::vector<QueueEntry> PipelineService::active_learning_queue() const {
  std::vector<QueueEntry> entries;
  for (const auto& r : reports_->all()) {
    QueueEntry e;
    e.railcar_id = r.railcar_id;
    e.overridden = r.status == ReportStatus::kOverridden || r.status == ReportStatus::kAdjudicated;
    e.min_conf = r.min_confidence();
    e.contamination = r.contamination.value_or(0.0);
    entries.push_back(std::move(e));
  }
  return active_learning_rank(std::move(entries));
}

EscalationPolicy PipelineService::policy() const {
  std::lock_guard lock(policy_mu_);
  return policies_.back();
}

std::vector<EscalationPolicy> PipelineService::policy_history() const {
  std::lock_guard lock(policy_mu_);
  return policies_;
}

EscalationPolicy PipelineService::update_policy(double contamination_threshold, double confidence_threshold,
                                                const std::string& operator_id, Role role) {
  if (role != Role::kSenior) throw Unauthorized("policy changes need the senior role");
  EscalationPolicy next;
  {
    std::lock_guard lock(policy_mu_);
    next.version = policies_.back().version + 1;
    next.contamination_threshold = contamination_threshold;
    next.confidence_threshold = confidence_threshold;
    try {
      next.validate();
    } catch (const ConfigError& e) {
      throw DataError(e.what());
    }
    policies_.push_back(next);
  }
  audit_->append(operator_id, "POLICY_UPDATE", next.to_json());
  events_.publish(kPolicyUpdated, "policy", next.to_json());
  return next;
}

std::vector<annotation::AnnotationRecord> PipelineService::flagged_annotations() const {
  if (!annotations_) throw NotFound("no annotation store attached");
  return annotations_->flagged();
}

annotation::AnnotationRecord PipelineService::adjudicate(const std::string& blind_id,
                                                         const annotation::SeniorLabel& label, Role role) {
  if (role != Role::kSenior) throw Unauthorized("adjudication needs the senior role");
  if (!annotations_) throw NotFound("no annotation store attached");
  auto rec = annotations_->adjudicate(blind_id, label);
  events_.publish(kAnnotationAdjudicated, blind_id, rec.to_json());
  return rec;
}

LatencyStats PipelineService::latency() const {
  std::vector<double> v;
  {
    std::lock_guard lock(latency_mu_);
    v = latency_ms_;
  }
  LatencyStats s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  auto rank = [&](double q) {
    const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return v[std::min(v.size() - 1, i == 0 ? 0 : i - 1)];
  };
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean_ms = sum / static_cast<double>(v.size());
  s.p50_ms = rank(0.5);
  s.p99_ms = rank(0.99);
  s.max_ms = v.back();
  return s;
}

std::map<std::size_t, double> PipelineService::layer_predictions(const std::string& railcar_id) const {
  std::lock_guard lock(latency_mu_);
  auto it = layer_predictions_.find(railcar_id);
  return it == layer_predictions_.end() ? std::map<std::size_t, double>{} : it->second;
}

json PipelineService::health() const {
  const double uptime =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  return {{"status", "ok"},
          {"model_version", model_.version},
          {"checkpoint_hash", checkpoint_hash_},
          {"objective", multitask_ ? "mtl" : "mil"},
          {"uptime_s", uptime},
          {"lines", cfg_.lines},
          {"retired_versions", cfg_.retired_versions},
          {"policy", policy().to_json()},
          {"layer_records", layers_->record_count()},
          {"reports", reports_->size()},
          {"latency", latency().to_json()}};
}

}  // namespace scrap::pipeline
