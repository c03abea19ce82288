#pragma once

#include <memory>
#include <string>

#include "scrap/pipeline/service.hpp"

namespace scrap::pipeline {

// HTTP front end of a PipelineService. Bodies are JSON.
//
//   POST /v{model}/lines/{line}/layers       ingest one layer message
//   POST /v{model}/railcars/{id}/finalize    unloading end signal → report
//   GET  /railcars/{id}/report
//   POST /railcars/{id}/override             X-Role + X-Operator headers
//   GET  /queue/active-learning
//   GET  /annotations/flagged
//   POST /annotations/{id}/adjudicate        X-Role: senior
//   GET  /events/stream                      SSE; ?cursor=N or Last-Event-ID,
//                                            optional ?max=N, ?idle_ms=N
//   GET  /healthz
//   GET  /policy, POST /policy               (POST: X-Role: senior)
//
// A retired model version in the path answers 410, an unknown one 404.
class HttpServer {
 public:
  explicit HttpServer(PipelineService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and starts serving on a background thread; port 0 picks a
  /// free port. Returns the bound port.
  int start(const std::string& host, int port);
  /// Stops accepting, ends open streams, drains the partitions.
  void stop();
  /// Blocks until the server thread exits.
  void wait();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace scrap::pipeline
