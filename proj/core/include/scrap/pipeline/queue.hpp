#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "scrap/pipeline/layer_store.hpp"

namespace scrap::pipeline {

// In-process partitioned queue: one FIFO and one consumer thread per line,
// so messages of a line are handled strictly in submission order while
// lines proceed independently.
class PartitionedQueue {
 public:
  using Clock = std::chrono::steady_clock;
  using Handler = std::function<IngestResult(const Envelope&, Clock::time_point enqueued)>;

  PartitionedQueue(std::size_t lines, Handler handler);
  ~PartitionedQueue();
  PartitionedQueue(const PartitionedQueue&) = delete;
  PartitionedQueue& operator=(const PartitionedQueue&) = delete;

  /// Messages for an unknown line resolve immediately as rejected.
  std::future<IngestResult> submit(Envelope e);
  /// Blocks until every partition is empty and idle.
  void drain();
  /// Finishes queued work, then joins the consumers. Later submits are
  /// rejected.
  void stop();
  std::size_t pending() const;

 private:
  struct Item {
    Envelope envelope;
    Clock::time_point enqueued;
    std::promise<IngestResult> done;
  };
  struct Partition {
    std::mutex mu;
    std::condition_variable cv;
    std::condition_variable idle;
    std::deque<Item> items;
    bool busy = false;
    std::thread worker;
  };

  void run(Partition& p);

  Handler handler_;
  std::vector<std::unique_ptr<Partition>> parts_;
  std::mutex state_mu_;
  bool stopping_ = false;
};

}  // namespace scrap::pipeline
