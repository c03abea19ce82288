#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace scrap::annotation {

struct AuditEvent {
  std::uint64_t sequence = 0;  // 1-based, gapless
  std::string actor;
  std::string action;
  std::string payload_digest;  // sha256 of the payload's JSON dump
  std::int64_t timestamp_ms = 0;

  nlohmann::json to_json() const;
  static AuditEvent from_json(const nlohmann::json& j);
};

// Append-only, thread-safe. With a sink path every event is also written as
// one JSON line before append() returns.
class AuditLog {
 public:
  using Clock = std::function<std::int64_t()>;

  AuditLog();
  explicit AuditLog(std::filesystem::path sink, Clock clock = {});

  AuditEvent append(const std::string& actor, const std::string& action,
                    const nlohmann::json& payload);

  std::vector<AuditEvent> events() const;
  std::vector<AuditEvent> events_since(std::uint64_t after_sequence) const;
  std::size_t size() const;

  /// Reads a sink file back, checking that sequences are gapless.
  static std::vector<AuditEvent> load(const std::filesystem::path& path);

 private:
  mutable std::mutex mu_;
  std::vector<AuditEvent> events_;
  std::optional<std::ofstream> sink_;
  Clock clock_;
};

std::int64_t wall_clock_ms();

}  // namespace scrap::annotation
