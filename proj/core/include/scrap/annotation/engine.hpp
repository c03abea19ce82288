#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "scrap/annotation/aggregate.hpp"
#include "scrap/annotation/audit.hpp"

namespace scrap::annotation {

// Raised when a read would expose peer labels before aggregation.
class BlindnessViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RaterEntry {
  std::string rater;
  double contamination = 0.0;
  std::string grade;
  std::int64_t timestamp_ms = 0;
  std::vector<std::string> excluded_frame_codes;
};

enum class AdjudicationState { kNone, kPending, kResolved };

std::string to_string(AdjudicationState s);

struct AnnotationRecord {
  std::string blind_id;
  std::vector<std::string> assigned;
  std::vector<RaterEntry> entries;
  std::optional<ContinuousAggregate> continuous;
  std::optional<CategoricalAggregate> categorical;
  bool flagged = false;          // dispersion above threshold
  bool needs_tiebreak = false;   // no strict grade majority
  AdjudicationState state = AdjudicationState::kNone;
  std::optional<double> final_contamination;
  std::optional<std::string> final_grade;
  std::string provenance;  // "consensus" or "adjudicated"
  std::string adjudicator;

  bool aggregated() const { return continuous.has_value(); }
  bool final() const { return aggregated() && state != AdjudicationState::kPending; }
  nlohmann::json to_json() const;
  static AnnotationRecord from_json(const nlohmann::json& j);
};

// What a rater may see of an item: their own submission and nothing else.
struct RaterView {
  std::string blind_id;
  bool assigned = false;
  std::optional<RaterEntry> own;
};

struct SeniorLabel {
  std::string senior_id;
  std::optional<double> contamination;
  std::optional<std::string> grade;
};

struct LabeledRow {
  std::string railcar_id;
  std::string blind_id;
  double contamination = 0.0;
  std::string grade;
  double dispersion = 0.0;
  std::string provenance;
};

struct AnnotationConfig {
  std::string salt = "scrap-annotation";
  std::size_t raters_per_item = kMinRaters;
  double flag_threshold = kDefaultFlagThreshold;
  GradeTaxonomy taxonomy;
  std::uint64_t seed = 11;
};

// Double-blind workflow: register → route → submit ×k → aggregate →
// (adjudicate). Every mutation appends to the audit log. All public calls
// are serialized internally.
class AnnotationEngine {
 public:
  AnnotationEngine(AnnotationConfig cfg, AuditLog& audit);

  const AnnotationConfig& config() const { return cfg_; }

  /// Idempotent; returns the blind id.
  std::string register_railcar(const std::string& railcar_id);
  std::vector<std::string> route(const std::string& blind_id, const std::vector<std::string>& pool);
  /// Aggregates automatically once every assigned rater has submitted.
  void submit(const std::string& rater, const std::string& blind_id, double contamination,
              const std::string& grade, std::vector<std::string> excluded_frame_codes = {},
              std::optional<std::int64_t> timestamp_ms = std::nullopt);

  RaterView view_for_rater(const std::string& rater, const std::string& blind_id) const;
  /// Full record including peer labels; throws BlindnessViolation before
  /// aggregation.
  AnnotationRecord record(const std::string& blind_id) const;
  std::vector<AnnotationRecord> flagged() const;
  AnnotationRecord adjudicate(const std::string& blind_id, const SeniorLabel& label);

  std::vector<std::string> blind_ids() const;
  std::size_t final_count() const;
  /// Final labels joined back to real railcar ids, sorted by railcar id.
  std::vector<LabeledRow> labeled_rows() const;

  void save_snapshot(const std::filesystem::path& path) const;
  void load_snapshot(const std::filesystem::path& path);

 private:
  AnnotationRecord& find(const std::string& blind_id);
  const AnnotationRecord& find(const std::string& blind_id) const;
  void aggregate_locked(AnnotationRecord& rec);

  AnnotationConfig cfg_;
  AuditLog& audit_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::map<std::string, AnnotationRecord> records_;
  std::map<std::string, std::string> railcar_of_;  // blind id → railcar id
};

}  // namespace scrap::annotation
