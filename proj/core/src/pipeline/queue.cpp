#include "scrap/pipeline/queue.hpp"

#include "scrap/common/error.hpp"

namespace scrap::pipeline {

PartitionedQueue::PartitionedQueue(std::size_t lines, Handler handler) : handler_(std::move(handler)) {
  if (lines == 0) throw ConfigError("queue needs at least one partition");
  for (std::size_t i = 0; i < lines; ++i) parts_.push_back(std::make_unique<Partition>());
  for (auto& p : parts_) p->worker = std::thread([this, raw = p.get()] { run(*raw); });
}

PartitionedQueue::~PartitionedQueue() { stop(); }

std::future<IngestResult> PartitionedQueue::submit(Envelope e) {
  std::promise<IngestResult> done;
  auto fut = done.get_future();
  const int line = e.line();
  bool stopping;
  {
    std::lock_guard lock(state_mu_);
    stopping = stopping_;
  }
  if (stopping) {
    done.set_value(IngestResult::rejected("service is shutting down"));
    return fut;
  }
  if (line < 1 || static_cast<std::size_t>(line) > parts_.size()) {
    done.set_value(IngestResult::rejected("unknown line " + std::to_string(line)));
    return fut;
  }
  auto& p = *parts_[static_cast<std::size_t>(line - 1)];
  {
    std::lock_guard lock(p.mu);
    p.items.push_back({std::move(e), Clock::now(), std::move(done)});
  }
  p.cv.notify_one();
  return fut;
}

void PartitionedQueue::run(Partition& p) {
  for (;;) {
    Item item;
    {
      std::unique_lock lock(p.mu);
      p.cv.wait(lock, [&] {
        std::lock_guard s(state_mu_);
        return stopping_ || !p.items.empty();
      });
      if (p.items.empty()) return;  // stopping and drained
      item = std::move(p.items.front());
      p.items.pop_front();
      p.busy = true;
    }
    try {
      item.done.set_value(handler_(item.envelope, item.enqueued));
    } catch (...) {
      item.done.set_exception(std::current_exception());
    }
    {
      std::lock_guard lock(p.mu);
      p.busy = false;
    }
    p.idle.notify_all();
  }
}

void PartitionedQueue::drain() {
  for (auto& p : parts_) {
    std::unique_lock lock(p->mu);
    p->idle.wait(lock, [&] { return p->items.empty() && !p->busy; });
  }
}

void PartitionedQueue::stop() {
  {
    std::lock_guard lock(state_mu_);
    stopping_ = true;
  }
  for (auto& p : parts_) {
    { std::lock_guard lock(p->mu); }
    p->cv.notify_all();
  }
  for (auto& p : parts_)
    if (p->worker.joinable()) p->worker.join();
}

std::size_t PartitionedQueue::pending() const {
  std::size_t n = 0;
  for (const auto& p : parts_) {
    std::lock_guard lock(p->mu);
    n += p->items.size() + (p->busy ? 1 : 0);
  }
  return n;
}

}  // namespace scrap::pipeline
