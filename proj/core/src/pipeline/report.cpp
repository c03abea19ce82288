#include "scrap/pipeline/report.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace scrap::pipeline {

using nlohmann::json;

std::string to_string(ReportStatus s) {
  switch (s) {
    case ReportStatus::kAuto: return "auto";
    case ReportStatus::kEscalated: return "escalated";
    case ReportStatus::kOverridden: return "overridden";
    case ReportStatus::kAdjudicated: return "adjudicated";
  }
  return "auto";
}

ReportStatus report_status_from_string(const std::string& s) {
  if (s == "auto") return ReportStatus::kAuto;
  if (s == "escalated") return ReportStatus::kEscalated;
  if (s == "overridden") return ReportStatus::kOverridden;
  if (s == "adjudicated") return ReportStatus::kAdjudicated;
  throw DataError("unknown report status '" + s + "'");
}

std::string to_string(Role r) { return r == Role::kSenior ? "senior" : "inspector"; }

Role role_from_string(const std::string& s) {
  if (s == "inspector") return Role::kInspector;
  if (s == "senior") return Role::kSenior;
  throw Unauthorized(s.empty() ? "role header required" : "unknown role '" + s + "'");
}

const std::vector<Rationale>& all_rationales() {
  static const std::vector<Rationale> v{Rationale::kMisgraded,
                                        Rationale::kContaminationUnderestimated,
                                        Rationale::kContaminationOverestimated,
                                        Rationale::kPoorVisibility,
                                        Rationale::kSensorFault,
                                        Rationale::kOther};
  return v;
}

std::string to_string(Rationale r) {
  switch (r) {
    case Rationale::kMisgraded: return "MISGRADED";
    case Rationale::kContaminationUnderestimated: return "CONTAMINATION_UNDERESTIMATED";
    case Rationale::kContaminationOverestimated: return "CONTAMINATION_OVERESTIMATED";
    case Rationale::kPoorVisibility: return "POOR_VISIBILITY";
    case Rationale::kSensorFault: return "SENSOR_FAULT";
    case Rationale::kOther: return "OTHER";
  }
  return "OTHER";
}

Rationale rationale_from_string(const std::string& s) {
  if (s.empty()) throw DataError("rationale code is mandatory");
  for (auto r : all_rationales())
    if (to_string(r) == s) return r;
  throw DataError("unknown rationale code '" + s + "'");
}

void EscalationPolicy::validate() const {
  if (version < 1) throw ConfigError("policy version must be ≥ 1");
  if (!(contamination_threshold >= 0.0 && contamination_threshold <= 100.0))
    throw ConfigError("contamination threshold outside [0,100]");
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0))
    throw ConfigError("confidence threshold outside [0,1]");
}

json EscalationPolicy::to_json() const {
  return {{"version", version},
          {"contamination_threshold", contamination_threshold},
          {"confidence_threshold", confidence_threshold}};
}

EscalationPolicy EscalationPolicy::from_json(const json& j) {
  EscalationPolicy p;
  try {
    p.version = j.value("version", p.version);
    p.contamination_threshold = j.value("contamination_threshold", p.contamination_threshold);
    p.confidence_threshold = j.value("confidence_threshold", p.confidence_threshold);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("escalation policy: ") + e.what());
  }
  p.validate();
  return p;
}

std::vector<std::string> escalation_triggers(const EscalationPolicy& policy, const PolicyInput& in) {
  std::vector<std::string> out;
  if (!in.contamination) {
    out.push_back(kNoEligibleLayers);
  } else {
    if (*in.contamination > policy.contamination_threshold) out.push_back(kHighContamination);
    double conf = in.reg_conf;
    if (in.cls_conf) conf = std::min(conf, *in.cls_conf);
    if (conf < policy.confidence_threshold) out.push_back(kLowConfidence);
  }
  if (!in.roi_conformant) out.push_back(kRoiNonconformant);
  return out;
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) return {};
  Summary s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return s;
}

json OverrideEvent::to_json() const {
  return {{"railcar_id", railcar_id}, {"operator_id", operator_id}, {"role", to_string(role)},
          {"field", field},           {"old_value", old_value},     {"new_value", new_value},
          {"rationale", to_string(rationale)}, {"timestamp_ms", timestamp_ms}};
}

OverrideEvent OverrideEvent::from_json(const json& j) {
  OverrideEvent e;
  e.railcar_id = j.at("railcar_id").get<std::string>();
  e.operator_id = j.at("operator_id").get<std::string>();
  e.role = role_from_string(j.at("role").get<std::string>());
  e.field = j.at("field").get<std::string>();
  e.old_value = j.at("old_value");
  e.new_value = j.at("new_value");
  e.rationale = rationale_from_string(j.at("rationale").get<std::string>());
  e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  return e;
}

bool RailcarReport::has_flag(const std::string& f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

double RailcarReport::min_confidence() const { return cls_conf ? std::min(reg_conf, *cls_conf) : reg_conf; }

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(); }

}  // namespace

json RailcarReport::to_json() const {
  json overrides_j = json::array();
  for (const auto& o : overrides) overrides_j.push_back(o.to_json());
  json j = {{"railcar_id", railcar_id},
            {"line", line},
            {"contamination", opt(contamination)},
            {"grade", grade ? json(*grade) : json()},
            {"class_probs", class_probs},
            {"layer_count", layer_count},
            {"eligible_layer_count", eligible_layer_count},
            {"confidence",
             {{"regression", reg_conf},
              {"classification", opt(cls_conf)},
              {"layer_regression", layer_reg_conf ? layer_reg_conf->to_json() : json()},
              {"layer_classification", layer_cls_conf ? layer_cls_conf->to_json() : json()}}},
            {"flags", flags},
            {"model_version", model_version},
            {"checkpoint_hash", checkpoint_hash},
            {"iou_digest", iou_digest},
            {"timestamps",
             {{"first_layer_ms", first_layer_ms},
              {"last_layer_ms", last_layer_ms},
              {"finalized_ms", finalized_ms}}},
            {"status", to_string(status)},
            {"policy_version", policy_version},
            {"history", history},
            {"overrides", overrides_j}};
  return j;
}

RailcarReport RailcarReport::from_json(const json& j) {
  auto summary = [](const json& s) -> std::optional<Summary> {
    if (s.is_null()) return std::nullopt;
    return Summary{s.at("min").get<double>(), s.at("mean").get<double>(), s.at("max").get<double>()};
  };
  auto optd = [](const json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  RailcarReport r;
  try {
    r.railcar_id = j.at("railcar_id").get<std::string>();
    r.line = j.at("line").get<int>();
    r.contamination = optd(j.at("contamination"));
    if (!j.at("grade").is_null()) r.grade = j.at("grade").get<std::string>();
    r.class_probs = j.at("class_probs").get<std::map<std::string, double>>();
    r.layer_count = j.at("layer_count").get<std::size_t>();
    r.eligible_layer_count = j.at("eligible_layer_count").get<std::size_t>();
    const auto& c = j.at("confidence");
    r.reg_conf = c.at("regression").get<double>();
    r.cls_conf = optd(c.at("classification"));
    r.layer_reg_conf = summary(c.at("layer_regression"));
    r.layer_cls_conf = summary(c.at("layer_classification"));
    r.flags = j.at("flags").get<std::vector<std::string>>();
    r.model_version = j.at("model_version").get<std::string>();
    r.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
    r.iou_digest = j.at("iou_digest").get<std::string>();
    const auto& t = j.at("timestamps");
    r.first_layer_ms = t.at("first_layer_ms").get<std::int64_t>();
    r.last_layer_ms = t.at("last_layer_ms").get<std::int64_t>();
    r.finalized_ms = t.at("finalized_ms").get<std::int64_t>();
    r.status = report_status_from_string(j.at("status").get<std::string>());
    r.policy_version = j.at("policy_version").get<int>();
    r.history = j.at("history").get<std::vector<json>>();
    for (const auto& o : j.at("overrides")) r.overrides.push_back(OverrideEvent::from_json(o));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

ReportStatus status_after_override(ReportStatus current, Role role) {
  if (role == Role::kSenior && current == ReportStatus::kEscalated) return ReportStatus::kAdjudicated;
  return ReportStatus::kOverridden;
}

json QueueEntry::to_json() const {
  return {{"railcar_id", railcar_id},
          {"overridden", overridden},
          {"min_conf", min_conf},
          {"contamination", contamination}};
}

std::vector<QueueEntry> active_learning_rank(std::vector<QueueEntry> records) {
  std::stable_sort(records.begin(), records.end(), [](const QueueEntry& a, const QueueEntry& b) {
    if (a.overridden != b.overridden) return a.overridden;
    if (a.min_conf != b.min_conf) return a.min_conf < b.min_conf;
    return a.contamination > b.contamination;
  });
  return records;
}

ReportStore::ReportStore(std::optional<std::filesystem::path> log_path) : path_(std::move(log_path)) {
  if (!path_) return;
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  std::ifstream in(*path_, std::ios::binary);
  std::string text;
  std::size_t n = 0;
  while (in && std::getline(in, text)) {
    ++n;
    if (text.empty()) continue;
    try {
      const auto ev = json::parse(text);
      auto report = RailcarReport::from_json(ev.at("report"));
      reports_[report.railcar_id] = std::move(report);
    } catch (const std::exception& e) {
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw IntegrityError(path_->string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void ReportStore::append_locked(const json& event) {
  if (!path_) return;
  std::ofstream out(*path_, std::ios::binary | std::ios::app);
  out << event.dump() << '\n';
  if (!out.flush()) throw DataError("report log append failed");
}

std::pair<RailcarReport, bool> ReportStore::create(const RailcarReport& report) {
  std::lock_guard lock(mu_);
  auto it = reports_.find(report.railcar_id);
  if (it != reports_.end()) return {it->second, false};
  append_locked({{"event", "created"}, {"report", report.to_json()}});
  reports_.emplace(report.railcar_id, report);
  return {report, true};
}

void ReportStore::record_override(const RailcarReport& updated, const OverrideEvent& ev) {
  std::lock_guard lock(mu_);
  if (!reports_.count(updated.railcar_id)) throw NotFound("no report for " + updated.railcar_id);
  append_locked({{"event", "override"}, {"override", ev.to_json()}, {"report", updated.to_json()}});
  reports_[updated.railcar_id] = updated;
}

std::optional<RailcarReport> ReportStore::get(const std::string& railcar_id) const {
  std::lock_guard lock(mu_);
  auto it = reports_.find(railcar_id);
  if (it == reports_.end()) return std::nullopt;
  return it->second;
}

std::vector<RailcarReport> ReportStore::all() const {
  std::lock_guard lock(mu_);
  std::vector<RailcarReport> out;
  for (const auto& [_, r] : reports_) out.push_back(r);
  return out;
}

std::size_t ReportStore::size() const {
  std::lock_guard lock(mu_);
  return reports_.size();
}

std::string ReportStore::snapshot() const {
  std::lock_guard lock(mu_);
  std::ostringstream out;
  for (const auto& [_, r] : reports_) out << r.to_json().dump() << '\n';
  return out.str();
}

}  // namespace scrap::pipeline
