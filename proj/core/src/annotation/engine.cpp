#include "scrap/annotation/engine.hpp"

#include <algorithm>
#include <fstream>

#include "scrap/common/error.hpp"

namespace scrap::annotation {

std::string to_string(AdjudicationState s) {
  switch (s) {
    case AdjudicationState::kNone: return "none";
    case AdjudicationState::kPending: return "pending";
    case AdjudicationState::kResolved: return "resolved";
  }
  return "none";
}

namespace {

AdjudicationState state_from_string(const std::string& s) {
  if (s == "none") return AdjudicationState::kNone;
  if (s == "pending") return AdjudicationState::kPending;
  if (s == "resolved") return AdjudicationState::kResolved;
  throw DataError("unknown adjudication state '" + s + "'");
}

}  // namespace

nlohmann::json AnnotationRecord::to_json() const {
  nlohmann::json entries_json = nlohmann::json::array();
  for (const auto& e : entries) {
    entries_json.push_back({{"rater", e.rater},
                            {"contamination", e.contamination},
                            {"grade", e.grade},
                            {"ts_ms", e.timestamp_ms},
                            {"excluded", e.excluded_frame_codes}});
  }
  nlohmann::json j = {
      {"blind_id", blind_id},
      {"assigned", assigned},
      {"entries", entries_json},
      {"flagged", flagged},
      {"needs_tiebreak", needs_tiebreak},
      {"state", to_string(state)},
      {"provenance", provenance},
      {"adjudicator", adjudicator},
  };
  if (continuous) {
    j["mean"] = continuous->mean;
    j["dispersion"] = continuous->std;
  }
  if (categorical) {
    j["votes"] = categorical->votes;
    if (categorical->grade) j["majority_grade"] = *categorical->grade;
  }
  j["final_contamination"] = final_contamination ? nlohmann::json(*final_contamination) : nullptr;
  j["final_grade"] = final_grade ? nlohmann::json(*final_grade) : nullptr;
  return j;
}

AnnotationRecord AnnotationRecord::from_json(const nlohmann::json& j) {
  try {
    AnnotationRecord r;
    r.blind_id = j.at("blind_id");
    r.assigned = j.at("assigned").get<std::vector<std::string>>();
    for (const auto& e : j.at("entries")) {
      r.entries.push_back(RaterEntry{e.at("rater"), e.at("contamination"), e.at("grade"),
                                     e.at("ts_ms"),
                                     e.at("excluded").get<std::vector<std::string>>()});
    }
    r.flagged = j.at("flagged");
    r.needs_tiebreak = j.at("needs_tiebreak");
    r.state = state_from_string(j.at("state"));
    r.provenance = j.at("provenance");
    r.adjudicator = j.value("adjudicator", "");
    if (j.contains("mean")) {
      r.continuous = ContinuousAggregate{j.at("mean"), j.at("dispersion"), r.flagged};
    }
    if (j.contains("votes")) {
      CategoricalAggregate c;
      c.votes = j.at("votes").get<std::map<std::string, std::size_t>>();
      if (j.contains("majority_grade")) c.grade = j.at("majority_grade").get<std::string>();
      r.categorical = c;
    }
    if (!j.at("final_contamination").is_null()) r.final_contamination = j.at("final_contamination");
    if (!j.at("final_grade").is_null()) r.final_grade = j.at("final_grade").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("annotation record: ") + e.what());
  }
}

AnnotationEngine::AnnotationEngine(AnnotationConfig cfg, AuditLog& audit)
    : cfg_(std::move(cfg)), audit_(audit), rng_(cfg_.seed) {
  if (cfg_.raters_per_item < kMinRaters) {
    throw ConfigError("annotation: at least " + std::to_string(kMinRaters) +
                      " raters per item are required");
  }
  if (cfg_.salt.empty()) throw ConfigError("annotation: empty pseudonymization salt");
}

AnnotationRecord& AnnotationEngine::find(const std::string& blind_id) {
  auto it = records_.find(blind_id);
  if (it == records_.end()) throw DataError("unknown annotation item '" + blind_id + "'");
  return it->second;
}

const AnnotationRecord& AnnotationEngine::find(const std::string& blind_id) const {
  auto it = records_.find(blind_id);
  if (it == records_.end()) throw DataError("unknown annotation item '" + blind_id + "'");
  return it->second;
}

std::string AnnotationEngine::register_railcar(const std::string& railcar_id) {
  const std::string blind = pseudonymize(railcar_id, cfg_.salt);
  std::lock_guard lock(mu_);
  if (records_.count(blind) == 0) {
    AnnotationRecord r;
    r.blind_id = blind;
    records_.emplace(blind, std::move(r));
    railcar_of_[blind] = railcar_id;
    audit_.append("system", "REGISTER", {{"blind_id", blind}});
  }
  return blind;
}

std::vector<std::string> AnnotationEngine::route(const std::string& blind_id,
                                                 const std::vector<std::string>& pool) {
  std::lock_guard lock(mu_);
  AnnotationRecord& r = find(blind_id);
  if (!r.assigned.empty()) return r.assigned;
  r.assigned = annotation::route(pool, cfg_.raters_per_item, rng_);
  audit_.append("system", "ROUTE", {{"blind_id", blind_id}, {"raters", r.assigned}});
  return r.assigned;
}

void AnnotationEngine::submit(const std::string& rater, const std::string& blind_id,
                              double contamination, const std::string& grade,
                              std::vector<std::string> excluded_frame_codes,
                              std::optional<std::int64_t> timestamp_ms) {
  if (!(contamination >= 0.0 && contamination <= 100.0)) {
    throw DataError("submit: contamination outside [0, 100]");
  }
  if (!cfg_.taxonomy.contains(grade)) throw DataError("submit: unknown grade '" + grade + "'");
  std::lock_guard lock(mu_);
  AnnotationRecord& r = find(blind_id);
  if (std::find(r.assigned.begin(), r.assigned.end(), rater) == r.assigned.end()) {
    throw StateError("submit: rater " + rater + " is not assigned to " + blind_id);
  }
  for (const auto& e : r.entries) {
    if (e.rater == rater) throw StateError("submit: rater " + rater + " already labeled " + blind_id);
  }
  RaterEntry e{rater, contamination, grade, timestamp_ms.value_or(wall_clock_ms()),
               std::move(excluded_frame_codes)};
  audit_.append(rater, "SUBMIT",
                {{"blind_id", blind_id}, {"contamination", e.contamination}, {"grade", e.grade}});
  r.entries.push_back(std::move(e));
  if (r.entries.size() == r.assigned.size()) aggregate_locked(r);
}

void AnnotationEngine::aggregate_locked(AnnotationRecord& r) {
  std::vector<double> values;
  std::vector<std::string> grades;
  for (const auto& e : r.entries) {
    values.push_back(e.contamination);
    grades.push_back(e.grade);
  }
  r.continuous = aggregate_continuous(values, cfg_.flag_threshold);
  r.categorical = aggregate_categorical(grades, cfg_.taxonomy);
  r.flagged = r.continuous->flagged;
  r.needs_tiebreak = r.categorical->needs_tiebreak();
  if (!r.flagged) r.final_contamination = r.continuous->mean;
  if (!r.needs_tiebreak) r.final_grade = r.categorical->grade;
  r.state = (r.flagged || r.needs_tiebreak) ? AdjudicationState::kPending : AdjudicationState::kNone;
  r.provenance = "consensus";
  audit_.append("system", "AGGREGATE",
                {{"blind_id", r.blind_id},
                 {"mean", r.continuous->mean},
                 {"dispersion", r.continuous->std},
                 {"flagged", r.flagged},
                 {"needs_tiebreak", r.needs_tiebreak}});
}

RaterView AnnotationEngine::view_for_rater(const std::string& rater,
                                           const std::string& blind_id) const {
  std::lock_guard lock(mu_);
  const AnnotationRecord& r = find(blind_id);
  RaterView v;
  v.blind_id = blind_id;
  v.assigned = std::find(r.assigned.begin(), r.assigned.end(), rater) != r.assigned.end();
  for (const auto& e : r.entries) {
    if (e.rater == rater) v.own = e;
  }
  return v;
}

AnnotationRecord AnnotationEngine::record(const std::string& blind_id) const {
  std::lock_guard lock(mu_);
  const AnnotationRecord& r = find(blind_id);
  if (!r.aggregated()) {
    throw BlindnessViolation("record " + blind_id + " is not aggregated; peer labels are sealed");
  }
  return r;
}

std::vector<AnnotationRecord> AnnotationEngine::flagged() const {
  std::lock_guard lock(mu_);
  std::vector<AnnotationRecord> out;
  for (const auto& [_, r] : records_) {
    if (r.state == AdjudicationState::kPending) out.push_back(r);
  }
  return out;
}

AnnotationRecord AnnotationEngine::adjudicate(const std::string& blind_id,
                                              const SeniorLabel& label) {
  std::lock_guard lock(mu_);
  AnnotationRecord& r = find(blind_id);
  if (r.state != AdjudicationState::kPending) {
    throw StateError("adjudicate: record " + blind_id + " is not awaiting adjudication");
  }
  if (label.senior_id.empty()) throw StateError("adjudicate: senior id required");
  if (r.flagged && !label.contamination) {
    throw DataError("adjudicate: flagged record needs a senior contamination value");
  }
  if (r.needs_tiebreak && !label.grade) {
    throw DataError("adjudicate: tied record needs a senior grade");
  }
  if (label.contamination && !(*label.contamination >= 0.0 && *label.contamination <= 100.0)) {
    throw DataError("adjudicate: contamination outside [0, 100]");
  }
  if (label.grade && !cfg_.taxonomy.contains(*label.grade)) {
    throw DataError("adjudicate: unknown grade '" + *label.grade + "'");
  }
  if (label.contamination) r.final_contamination = *label.contamination;
  if (label.grade) r.final_grade = *label.grade;
  r.state = AdjudicationState::kResolved;
  r.provenance = "adjudicated";
  r.adjudicator = label.senior_id;
  nlohmann::json payload = {{"blind_id", blind_id}};
  if (label.contamination) payload["contamination"] = *label.contamination;
  if (label.grade) payload["grade"] = *label.grade;
  audit_.append(label.senior_id, "ADJUDICATE", payload);
  return r;
}

std::vector<std::string> AnnotationEngine::blind_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : records_) out.push_back(id);
  return out;
}

std::size_t AnnotationEngine::final_count() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [](const auto& kv) {
    return kv.second.final();
  }));
}

std::vector<LabeledRow> AnnotationEngine::labeled_rows() const {
  std::lock_guard lock(mu_);
  std::vector<LabeledRow> out;
  for (const auto& [blind, r] : records_) {
    if (!r.final() || !r.final_contamination || !r.final_grade) continue;
    out.push_back(LabeledRow{railcar_of_.at(blind), blind, *r.final_contamination, *r.final_grade,
                             r.continuous->std, r.provenance});
  }
  std::sort(out.begin(), out.end(),
            [](const LabeledRow& a, const LabeledRow& b) { return a.railcar_id < b.railcar_id; });
  return out;
}

void AnnotationEngine::save_snapshot(const std::filesystem::path& path) const {
  std::lock_guard lock(mu_);
  nlohmann::json doc = {{"salt_digest", pseudonymize("salt-check", cfg_.salt)},
                        {"records", nlohmann::json::array()},
                        {"railcars", railcar_of_}};
  for (const auto& [_, r] : records_) doc["records"].push_back(r.to_json());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

void AnnotationEngine::load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("annotation snapshot: ") + e.what());
  }
  if (doc.value("salt_digest", "") != pseudonymize("salt-check", cfg_.salt)) {
    throw ConfigError("annotation snapshot was written with a different salt");
  }
  std::lock_guard lock(mu_);
  records_.clear();
  for (const auto& rj : doc.at("records")) {
    auto r = AnnotationRecord::from_json(rj);
    records_.emplace(r.blind_id, std::move(r));
  }
  railcar_of_ = doc.at("railcars").get<std::map<std::string, std::string>>();
}

}  // namespace scrap::annotation
