#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scrap/common/error.hpp"

namespace scrap::pipeline {

class NotFound : public DataError {
 public:
  using DataError::DataError;
};

class Unauthorized : public Error {
 public:
  using Error::Error;
};

enum class ReportStatus { kAuto, kEscalated, kOverridden, kAdjudicated };
std::string to_string(ReportStatus s);
ReportStatus report_status_from_string(const std::string& s);

enum class Role { kInspector, kSenior };
std::string to_string(Role r);
/// Throws Unauthorized for anything but "inspector" / "senior".
Role role_from_string(const std::string& s);

enum class Rationale {
  kMisgraded,
  kContaminationUnderestimated,
  kContaminationOverestimated,
  kPoorVisibility,
  kSensorFault,
  kOther,
};
std::string to_string(Rationale r);
/// Throws DataError for an empty or unknown code.
Rationale rationale_from_string(const std::string& s);
const std::vector<Rationale>& all_rationales();

// Report flags.
inline constexpr const char* kHighContamination = "HIGH_CONTAMINATION";
inline constexpr const char* kLowConfidence = "LOW_CONFIDENCE";
inline constexpr const char* kNoEligibleLayers = "NO_ELIGIBLE_LAYERS";
inline constexpr const char* kQualityRejectedLayers = "QUALITY_REJECTED_LAYERS";
inline constexpr const char* kRoiNonconformant = "ROI_NONCONFORMANT";

struct EscalationPolicy {
  int version = 1;
  double contamination_threshold = 2.0;  // percent, escalate strictly above
  double confidence_threshold = 0.5;     // escalate strictly below

  void validate() const;
  nlohmann::json to_json() const;
  static EscalationPolicy from_json(const nlohmann::json& j);
};

struct PolicyInput {
  std::optional<double> contamination;     // unset when no layer was eligible
  double reg_conf = 1.0;
  std::optional<double> cls_conf;          // unset for regression-only models
  bool roi_conformant = true;
};

/// Escalation triggers in reporting order; empty means auto.
std::vector<std::string> escalation_triggers(const EscalationPolicy& policy, const PolicyInput& in);

struct Summary {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;

  nlohmann::json to_json() const { return {{"min", min}, {"mean", mean}, {"max", max}}; }
};

Summary summarize(const std::vector<double>& values);

struct OverrideEvent {
  std::string railcar_id;
  std::string operator_id;
  Role role = Role::kInspector;
  std::string field;  // "contamination" or "grade"
  nlohmann::json old_value;
  nlohmann::json new_value;
  Rationale rationale = Rationale::kOther;
  std::int64_t timestamp_ms = 0;

  nlohmann::json to_json() const;
  static OverrideEvent from_json(const nlohmann::json& j);
};

struct RailcarReport {
  std::string railcar_id;
  int line = 0;
  std::optional<double> contamination;
  std::optional<std::string> grade;
  std::map<std::string, double> class_probs;
  std::size_t layer_count = 0;
  std::size_t eligible_layer_count = 0;
  double reg_conf = 1.0;
  std::optional<double> cls_conf;
  std::optional<Summary> layer_reg_conf;
  std::optional<Summary> layer_cls_conf;
  std::vector<std::string> flags;
  std::string model_version;
  std::string checkpoint_hash;
  std::string iou_digest;
  std::int64_t first_layer_ms = 0;
  std::int64_t last_layer_ms = 0;
  std::int64_t finalized_ms = 0;
  ReportStatus status = ReportStatus::kAuto;
  int policy_version = 1;
  std::vector<nlohmann::json> history;  // prior states, oldest first
  std::vector<OverrideEvent> overrides;

  bool has_flag(const std::string& f) const;
  /// min(reg_conf, cls_conf) or reg_conf alone.
  double min_confidence() const;
  nlohmann::json to_json() const;
  static RailcarReport from_json(const nlohmann::json& j);
};

/// Status after an override: a senior resolving an escalated report
/// adjudicates it, every other accepted override marks it overridden.
ReportStatus status_after_override(ReportStatus current, Role role);

struct OverrideRequest {
  std::string railcar_id;
  std::string operator_id;
  std::string role;
  std::string field;
  nlohmann::json new_value;
  std::string rationale;
  std::optional<std::int64_t> timestamp_ms;
};

struct QueueEntry {
  std::string railcar_id;
  bool overridden = false;
  double min_conf = 1.0;
  double contamination = 0.0;

  nlohmann::json to_json() const;
};

/// Corrections first, then ascending min confidence, then descending
/// contamination; ties keep input order.
std::vector<QueueEntry> active_learning_rank(std::vector<QueueEntry> records);

// Report table with an append-only event log (<file>: one JSON event per
// line, "created" or "override") from which the table is rebuilt on start.
class ReportStore {
 public:
  explicit ReportStore(std::optional<std::filesystem::path> log_path = {});

  /// Inserts unless a report for the railcar exists; returns the stored one.
  std::pair<RailcarReport, bool> create(const RailcarReport& report);
  void record_override(const RailcarReport& updated, const OverrideEvent& ev);

  std::optional<RailcarReport> get(const std::string& railcar_id) const;
  std::vector<RailcarReport> all() const;
  std::size_t size() const;
  /// Canonical dump, one report per line sorted by railcar id.
  std::string snapshot() const;

 private:
  void append_locked(const nlohmann::json& event);

  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::map<std::string, RailcarReport> reports_;
};

}  // namespace scrap::pipeline
