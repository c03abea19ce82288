#include "scrap/pipeline/events.hpp"

namespace scrap::pipeline {

nlohmann::json StreamEvent::to_json() const {
  return {{"id", id}, {"type", type}, {"subject", subject}, {"data", data}};
}

std::string StreamEvent::sse_frame() const {
  return "id: " + std::to_string(id) + "\nevent: " + type + "\ndata: " + to_json().dump() + "\n\n";
}

std::uint64_t EventHub::publish(const std::string& type, const std::string& subject,
                                nlohmann::json data) {
  std::uint64_t id;
  {
    std::lock_guard lock(mu_);
    id = events_.size() + 1;
    events_.push_back({id, type, subject, std::move(data)});
  }
  cv_.notify_all();
  return id;
}

std::vector<StreamEvent> EventHub::since(std::uint64_t cursor, std::size_t max) const {
  std::lock_guard lock(mu_);
  std::vector<StreamEvent> out;
  for (std::size_t i = cursor; i < events_.size() && out.size() < max; ++i) out.push_back(events_[i]);
  return out;
}

std::vector<StreamEvent> EventHub::wait_since(std::uint64_t cursor, std::chrono::milliseconds timeout,
                                              std::size_t max) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || events_.size() > cursor; });
  std::vector<StreamEvent> out;
  for (std::size_t i = cursor; i < events_.size() && out.size() < max; ++i) out.push_back(events_[i]);
  return out;
}

std::uint64_t EventHub::last_id() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

void EventHub::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventHub::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

}  // namespace scrap::pipeline
