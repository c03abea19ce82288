#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "commands.hpp"
#include "httplib.h"
#include "scrap/common/error.hpp"
#include "scrap/pipeline/messages.hpp"
#include "scrap/sim/campaign_io.hpp"

namespace scrapctl {

using nlohmann::json;

namespace {

// Posts with retries; every endpoint is idempotent so a retry after a lost
// response is safe.
httplib::Result post_retry(httplib::Client& cli, const std::string& path, const std::string& body) {
  for (int attempt = 0;; ++attempt) {
    auto res = cli.Post(path, body, "application/json");
    if (res || attempt == 4) return res;
    std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
  }
}

}  // namespace

int replay(const ReplayArgs& a) {
  const auto campaign = scrap::sim::load_campaign(a.campaign);
  auto messages = scrap::pipeline::campaign_messages(campaign);
  const std::size_t unique = messages.size();
  if (a.chaos_seed) messages = scrap::pipeline::chaos_deliveries(messages, *a.chaos_seed, a.max_deliveries);
  const auto parts = scrap::pipeline::partition_by_line(messages, campaign.config.lines);

  std::atomic<std::size_t> accepted{0}, duplicate{0}, rejected{0}, failed{0};
  std::vector<std::thread> workers;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& part : parts) {
    workers.emplace_back([&, &part = part] {
      httplib::Client cli(a.url);
      cli.set_read_timeout(30, 0);
      for (const auto& m : part) {
        std::string path;
        std::string body;
        if (m.kind == scrap::pipeline::MessageKind::kLayer) {
          path = "/v" + a.version + "/lines/" + std::to_string(m.line()) + "/layers";
          body = m.layer.to_json().dump();
        } else {
          path = "/v" + a.version + "/railcars/" + m.railcar_id() + "/finalize";
          body = m.finalize.to_json().dump();
        }
        auto res = post_retry(cli, path, body);
        if (!res || res->status >= 500) {
          ++failed;
          continue;
        }
        std::string result;
        try {
          result = json::parse(res->body).value("result", "");
        } catch (const json::exception&) {
        }
        if (result == "accepted") ++accepted;
        else if (result == "duplicate") ++duplicate;
        else ++rejected;
      }
    });
  }
  for (auto& w : workers) w.join();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const json summary = {{"messages", unique},  {"deliveries", messages.size()}, {"accepted", accepted.load()},
                        {"duplicate", duplicate.load()}, {"rejected", rejected.load()}, {"failed", failed.load()},
                        {"seconds", secs}};
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    out << summary.dump(2) << '\n';
  }
  std::cout << summary.dump() << '\n';
  if (failed > 0) throw scrap::DataError(std::to_string(failed.load()) + " deliveries failed");
  return 0;
}

int report(const ReportArgs& a) {
  httplib::Client cli(a.url);
  cli.set_read_timeout(30, 0);
  std::vector<std::string> ids;
  if (!a.railcar.empty()) {
    ids.push_back(a.railcar);
  } else {
    auto res = cli.Get("/railcars");
    if (!res || res->status != 200) throw scrap::DataError("cannot list railcars from " + a.url);
    ids = json::parse(res->body).at("railcars").get<std::vector<std::string>>();
  }
  std::ofstream out;
  if (!a.out.empty()) {
    out.open(a.out, std::ios::binary | std::ios::trunc);
    if (!out) throw scrap::DataError("cannot write " + a.out);
  }
  std::map<std::string, std::size_t> by_status;
  for (const auto& id : ids) {
    auto res = cli.Get("/railcars/" + id + "/report");
    if (!res) throw scrap::DataError("no response for " + id);
    if (res->status == 404) throw scrap::DataError("no report for " + id);
    if (res->status != 200) throw scrap::DataError("report " + id + ": HTTP " + std::to_string(res->status));
    const auto j = json::parse(res->body);
    ++by_status[j.at("status").get<std::string>()];
    if (out.is_open()) out << j.dump() << '\n';
    else if (!a.railcar.empty()) std::cout << j.dump(2) << '\n';
  }
  std::cout << json{{"reports", ids.size()}, {"by_status", by_status}}.dump() << '\n';
  return 0;
}

}  // namespace scrapctl
