#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

namespace scrap::pipeline {

// Event types on the operator stream.
inline constexpr const char* kReportCreated = "report.created";
inline constexpr const char* kReportEscalated = "report.escalated";
inline constexpr const char* kReportUpdated = "report.updated";
inline constexpr const char* kAnnotationAdjudicated = "annotation.adjudicated";
inline constexpr const char* kPolicyUpdated = "policy.updated";

struct StreamEvent {
  std::uint64_t id = 0;  // 1-based, gapless; doubles as the resume cursor
  std::string type;
  std::string subject;   // railcar id or blind id
  nlohmann::json data;

  nlohmann::json to_json() const;
  /// "id: <id>\nevent: <type>\ndata: <json>\n\n"
  std::string sse_frame() const;
};

// In-memory, append-only event sequence with blocking reads from a cursor.
class EventHub {
 public:
  std::uint64_t publish(const std::string& type, const std::string& subject, nlohmann::json data);
  /// Events with id > cursor, at most max.
  std::vector<StreamEvent> since(std::uint64_t cursor, std::size_t max = SIZE_MAX) const;
  /// Blocks until an event past the cursor exists, the hub closes or the
  /// timeout expires.
  std::vector<StreamEvent> wait_since(std::uint64_t cursor, std::chrono::milliseconds timeout,
                                      std::size_t max = SIZE_MAX) const;
  std::uint64_t last_id() const;
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<StreamEvent> events_;
  bool closed_ = false;
};

}  // namespace scrap::pipeline
