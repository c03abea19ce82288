#include "scrap/annotation/audit.hpp"

#include <chrono>

#include "scrap/common/digest.hpp"
#include "scrap/common/error.hpp"

namespace scrap::annotation {

std::int64_t wall_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

nlohmann::json AuditEvent::to_json() const {
  return {{"seq", sequence},
          {"actor", actor},
          {"action", action},
          {"digest", payload_digest},
          {"ts_ms", timestamp_ms}};
}

AuditEvent AuditEvent::from_json(const nlohmann::json& j) {
  try {
    return AuditEvent{j.at("seq"), j.at("actor"), j.at("action"), j.at("digest"), j.at("ts_ms")};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("audit event: ") + e.what());
  }
}

AuditLog::AuditLog() : clock_(wall_clock_ms) {}

AuditLog::AuditLog(std::filesystem::path sink, Clock clock)
    : clock_(clock ? std::move(clock) : Clock(wall_clock_ms)) {
  if (std::filesystem::exists(sink)) events_ = load(sink);
  sink_.emplace(sink, std::ios::binary | std::ios::app);
  if (!*sink_) throw DataError("cannot open audit log " + sink.string());
}

AuditEvent AuditLog::append(const std::string& actor, const std::string& action,
                            const nlohmann::json& payload) {
  std::lock_guard lock(mu_);
  AuditEvent e;
  e.sequence = events_.size() + 1;
  e.actor = actor;
  e.action = action;
  e.payload_digest = sha256_hex(payload.dump());
  e.timestamp_ms = clock_();
  if (sink_) {
    *sink_ << e.to_json().dump() << '\n';
    sink_->flush();
    if (!*sink_) throw DataError("audit log write failed");
  }
  events_.push_back(e);
  return e;
}

std::vector<AuditEvent> AuditLog::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<AuditEvent> AuditLog::events_since(std::uint64_t after) const {
  std::lock_guard lock(mu_);
  if (after >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(after), events_.end()};
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

std::vector<AuditEvent> AuditLog::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audit log " + path.string());
  std::vector<AuditEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    AuditEvent e;
    try {
      e = AuditEvent::from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& ex) {
      throw DataError(std::string("audit log: ") + ex.what());
    }
    if (e.sequence != out.size() + 1) {
      throw IntegrityError("audit log: sequence gap at " + std::to_string(e.sequence));
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace scrap::annotation
