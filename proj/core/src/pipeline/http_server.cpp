#include "scrap/pipeline/http_server.hpp"

#include <atomic>
#include <thread>

#include "httplib.h"

namespace scrap::pipeline {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  reply(res, status, {{"error", code}, {"message", message}});
}

json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty()) {
    if (allow_empty) return json::object();
    throw DataError("request body required");
  }
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw DataError("request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what());
  }
}

// Maps library errors onto status codes; anything else is a 500.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const Unauthorized& e) {
    error(res, 403, "forbidden", e.what());
  } catch (const NotFound& e) {
    error(res, 404, "not_found", e.what());
  } catch (const annotation::BlindnessViolation& e) {
    error(res, 403, "blindness_violation", e.what());
  } catch (const StateError& e) {
    error(res, 409, "conflict", e.what());
  } catch (const DataError& e) {
    error(res, 400, "bad_request", e.what());
  } catch (const ConfigError& e) {
    error(res, 400, "bad_request", e.what());
  } catch (const json::exception& e) {
    error(res, 400, "bad_request", e.what());
  } catch (const std::exception& e) {
    error(res, 500, "internal", e.what());
  }
}

}  // namespace

struct HttpServer::Impl {
  PipelineService& service;
  httplib::Server server;
  std::thread thread;
  std::atomic<bool> stopping{false};
  int port = 0;

  explicit Impl(PipelineService& s) : service(s) {}

  // True when the request may proceed; otherwise the response is set.
  bool check_version(const std::string& v, httplib::Response& res) {
    if (v == service.model_version()) return true;
    if (service.version_retired(v))
      error(res, 410, "version_gone", "model version " + v + " has been retired");
    else
      error(res, 404, "unknown_version", "model version " + v + " is not served here");
    return false;
  }

  void routes();
};

void HttpServer::Impl::routes() {
  server.Post(R"(/v([^/]+)/lines/(\d+)/layers)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!check_version(req.matches[1], res)) return;
      const int line = std::stoi(req.matches[2]);
      auto body = parse_body(req, false);
      if (!body.contains("line")) body["line"] = line;
      IngestMessage msg;
      try {
        msg = IngestMessage::from_json(body);
      } catch (const DataError& e) {
        reply(res, 400, {{"result", "rejected"}, {"reason", e.what()}});
        return;
      }
      if (msg.line != line) {
        reply(res, 422, {{"result", "rejected"}, {"reason", "line in body differs from path"}});
        return;
      }
      Envelope e;
      e.layer = std::move(msg);
      const auto r = service.submit(std::move(e)).get();
      json out = {{"result", to_string(r.status)}};
      if (r.status == IngestStatus::kRejected) out["reason"] = r.reason;
      reply(res, r.status == IngestStatus::kRejected ? 422 : 200, out);
    });
  });

  server.Post(R"(/v([^/]+)/railcars/([^/]+)/finalize)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!check_version(req.matches[1], res)) return;
      const std::string id = req.matches[2];
      auto body = parse_body(req, true);
      const auto car = service.layer_store().railcar(id);
      if (!car) throw NotFound("unknown railcar " + id);
      if (!body.contains("railcar_id")) body["railcar_id"] = id;
      if (!body.contains("dedupe_id")) body["dedupe_id"] = id + ":END";
      if (!body.contains("line")) body["line"] = car->line;
      if (!body.contains("timestamp_ms")) {
        std::int64_t last = 0;
        for (const auto& [_, m] : car->layers) last = std::max(last, m.timestamp_ms);
        body["timestamp_ms"] = last;
      }
      Envelope e;
      e.kind = MessageKind::kFinalize;
      e.finalize = FinalizeMessage::from_json(body);
      if (e.finalize.railcar_id != id) throw DataError("railcar id in body differs from path");
      const auto r = service.submit(std::move(e)).get();
      if (r.status == IngestStatus::kRejected) {
        reply(res, 422, {{"result", "rejected"}, {"reason", r.reason}});
        return;
      }
      const auto report = service.report(id);
      if (!report) throw NotFound("no report for " + id);
      reply(res, 200, {{"result", to_string(r.status)}, {"report", report->to_json()}});
    });
  });

  server.Get(R"(/railcars/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto report = service.report(req.matches[1]);
      if (!report) throw NotFound("no report for " + std::string(req.matches[1]));
      reply(res, 200, report->to_json());
    });
  });

  server.Get("/railcars", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json ids = json::array();
      for (const auto& r : service.reports()) ids.push_back(r.railcar_id);
      reply(res, 200, {{"railcars", ids}});
    });
  });

  server.Post(R"(/railcars/([^/]+)/override)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      OverrideRequest o;
      o.railcar_id = req.matches[1];
      o.role = req.get_header_value("X-Role");
      o.operator_id = req.get_header_value("X-Operator");
      role_from_string(o.role);
      const auto body = parse_body(req, false);
      o.field = body.value("field", std::string());
      if (body.contains("new_value")) o.new_value = body.at("new_value");
      o.rationale = body.value("rationale", std::string());
      if (body.contains("timestamp_ms")) o.timestamp_ms = body.at("timestamp_ms").get<std::int64_t>();
      reply(res, 200, service.apply_override(o).to_json());
    });
  });

  server.Get("/queue/active-learning", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto queue = service.active_learning_queue();
      if (req.has_param("limit")) {
        const auto n = std::stoul(req.get_param_value("limit"));
        if (queue.size() > n) queue.resize(n);
      }
      json items = json::array();
      for (const auto& q : queue) items.push_back(q.to_json());
      reply(res, 200, {{"queue", items}});
    });
  });

  server.Get("/annotations/flagged", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json items = json::array();
      for (const auto& r : service.flagged_annotations()) items.push_back(r.to_json());
      reply(res, 200, {{"records", items}});
    });
  });

  server.Post(R"(/annotations/([^/]+)/adjudicate)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Role role = role_from_string(req.get_header_value("X-Role"));
      const auto body = parse_body(req, false);
      annotation::SeniorLabel label;
      label.senior_id = req.get_header_value("X-Operator");
      if (label.senior_id.empty()) throw Unauthorized("operator id required");
      if (body.contains("contamination")) label.contamination = body.at("contamination").get<double>();
      if (body.contains("grade")) label.grade = body.at("grade").get<std::string>();
      reply(res, 200, service.adjudicate(req.matches[1], label, role).to_json());
    });
  });

  server.Get("/policy", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json history = json::array();
      for (const auto& p : service.policy_history()) history.push_back(p.to_json());
      reply(res, 200, {{"current", service.policy().to_json()}, {"history", history}});
    });
  });

  server.Post("/policy", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Role role = role_from_string(req.get_header_value("X-Role"));
      const auto body = parse_body(req, false);
      const auto current = service.policy();
      const auto next = service.update_policy(
          body.value("contamination_threshold", current.contamination_threshold),
          body.value("confidence_threshold", current.confidence_threshold),
          req.get_header_value("X-Operator"), role);
      reply(res, 200, next.to_json());
    });
  });

  server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, service.health()); });
  });

  server.Get("/events/stream", [this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t cursor = 0;
    std::size_t max = SIZE_MAX;
    long idle_ms = -1;
    try {
      if (req.has_param("cursor")) cursor = std::stoull(req.get_param_value("cursor"));
      else if (req.has_header("Last-Event-ID")) cursor = std::stoull(req.get_header_value("Last-Event-ID"));
      if (req.has_param("max")) max = std::stoul(req.get_param_value("max"));
      if (req.has_param("idle_ms")) idle_ms = std::stol(req.get_param_value("idle_ms"));
    } catch (const std::exception&) {
      error(res, 400, "bad_request", "cursor, max and idle_ms must be integers");
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    auto state = std::make_shared<std::pair<std::uint64_t, std::size_t>>(cursor, 0);
    res.set_chunked_content_provider(
        "text/event-stream", [this, state, max, idle_ms](std::size_t, httplib::DataSink& sink) {
          auto idle_start = std::chrono::steady_clock::now();
          for (;;) {
            if (stopping || state->second >= max) {
              sink.done();
              return true;
            }
            const auto batch = service.events().wait_since(state->first, std::chrono::milliseconds(250),
                                                           max - state->second);
            if (!batch.empty()) {
              for (const auto& ev : batch) {
                const auto frame = ev.sse_frame();
                if (!sink.write(frame.data(), frame.size())) return false;
                state->first = ev.id;
                ++state->second;
              }
              return true;
            }
            if (service.events().closed()) {
              sink.done();
              return true;
            }
            const auto waited = std::chrono::steady_clock::now() - idle_start;
            if (idle_ms >= 0 && waited >= std::chrono::milliseconds(idle_ms)) {
              sink.done();
              return true;
            }
            if (waited >= std::chrono::seconds(5)) {
              static const std::string keepalive = ": keepalive\n\n";
              if (!sink.write(keepalive.data(), keepalive.size())) return false;
              return true;
            }
          }
        });
  });
}

HttpServer::HttpServer(PipelineService& service) : impl_(std::make_unique<Impl>(service)) {
  impl_->server.new_task_queue = [] { return new httplib::ThreadPool(16); };
  impl_->routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  auto& s = impl_->server;
  if (port == 0) {
    impl_->port = s.bind_to_any_port(host);
    if (impl_->port <= 0) throw ConfigError("cannot bind " + host);
  } else {
    if (!s.bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    impl_->port = port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  return impl_->port;
}

void HttpServer::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->service.drain();
}

void HttpServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

int HttpServer::port() const { return impl_->port; }

}  // namespace scrap::pipeline
