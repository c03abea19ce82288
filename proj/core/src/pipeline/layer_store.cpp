#include "scrap/pipeline/layer_store.hpp"

#include <unistd.h>

#include <fstream>
#include <sstream>

#include "scrap/common/error.hpp"

namespace scrap::pipeline {

namespace fs = std::filesystem;

std::string to_string(IngestStatus s) {
  switch (s) {
    case IngestStatus::kAccepted: return "accepted";
    case IngestStatus::kDuplicate: return "duplicate";
    case IngestStatus::kRejected: return "rejected";
  }
  return "rejected";
}

LayerStore::LayerStore(std::size_t lines, std::optional<fs::path> wal_dir, bool fsync)
    : lines_(lines), dir_(std::move(wal_dir)), fsync_(fsync) {
  if (lines_ == 0) throw ConfigError("layer store needs at least one line");
  if (!dir_) return;
  fs::create_directories(*dir_);
  recover();
  for (std::size_t l = 1; l <= lines_; ++l) {
    const auto path = *dir_ / ("line-" + std::to_string(l) + ".wal.jsonl");
    std::FILE* f = std::fopen(path.c_str(), "ab");
    if (!f) throw DataError("cannot open " + path.string());
    wal_.emplace_back(f, &std::fclose);
  }
}

void LayerStore::recover() {
  for (std::size_t l = 1; l <= lines_; ++l) {
    const auto path = *dir_ / ("line-" + std::to_string(l) + ".wal.jsonl");
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;
    std::string text;
    std::size_t n = 0;
    while (std::getline(in, text)) {
      ++n;
      if (text.empty()) continue;
      Envelope e;
      try {
        e = Envelope::from_json(nlohmann::json::parse(text));
      } catch (const std::exception& ex) {
        // A torn final write is the only damage an append-only log can
        // take; anything earlier is corruption.
        if (in.peek() == std::char_traits<char>::eof()) break;
        throw IntegrityError(path.string() + ":" + std::to_string(n) + ": " + ex.what());
      }
      if (dedupe_.count(e.dedupe_id())) continue;
      apply_locked(e);
    }
  }
}

IngestResult LayerStore::check_layer_locked(const IngestMessage& msg) const {
  if (msg.line < 1 || static_cast<std::size_t>(msg.line) > lines_)
    return IngestResult::rejected("unknown line " + std::to_string(msg.line));
  auto it = railcars_.find(msg.railcar_id);
  if (it == railcars_.end()) return IngestResult::accepted();
  const auto& car = it->second;
  if (car.line != msg.line)
    return IngestResult::rejected("railcar " + msg.railcar_id + " is bound to line " +
                                  std::to_string(car.line));
  if (car.finalized) return IngestResult::rejected("railcar " + msg.railcar_id + " already finalized");
  if (car.layers.count(msg.layer_index))
    return IngestResult::rejected("layer " + std::to_string(msg.layer_index) + " of " + msg.railcar_id +
                                  " already recorded under another dedupe id");
  return IngestResult::accepted();
}

IngestResult LayerStore::check_finalize_locked(const FinalizeMessage& msg) const {
  if (msg.line < 1 || static_cast<std::size_t>(msg.line) > lines_)
    return IngestResult::rejected("unknown line " + std::to_string(msg.line));
  auto it = railcars_.find(msg.railcar_id);
  if (it == railcars_.end()) return IngestResult::rejected("unknown railcar " + msg.railcar_id);
  if (it->second.line != msg.line)
    return IngestResult::rejected("railcar " + msg.railcar_id + " is bound to line " +
                                  std::to_string(it->second.line));
  if (it->second.finalized) return IngestResult::duplicate();
  return IngestResult::accepted();
}

void LayerStore::apply_locked(const Envelope& e) {
  dedupe_.insert(e.dedupe_id());
  if (e.kind == MessageKind::kLayer) {
    auto& car = railcars_[e.layer.railcar_id];
    car.railcar_id = e.layer.railcar_id;
    car.line = e.layer.line;
    car.layers.emplace(e.layer.layer_index, e.layer);
    ++records_;
  } else {
    railcars_.at(e.finalize.railcar_id).finalized = e.finalize;
  }
}

void LayerStore::append_wal_locked(const Envelope& e) {
  if (!dir_) return;
  std::FILE* f = wal_.at(static_cast<std::size_t>(e.line() - 1)).get();
  const std::string text = e.to_json().dump() + "\n";
  if (std::fwrite(text.data(), 1, text.size(), f) != text.size() || std::fflush(f) != 0)
    throw DataError("write-ahead log append failed");
  if (fsync_) ::fsync(::fileno(f));
}

IngestResult LayerStore::insert(const IngestMessage& msg) {
  std::lock_guard lock(mu_);
  if (dedupe_.count(msg.dedupe_id)) return IngestResult::duplicate();
  auto verdict = check_layer_locked(msg);
  if (verdict.status != IngestStatus::kAccepted) return verdict;
  Envelope e;
  e.kind = MessageKind::kLayer;
  e.layer = msg;
  append_wal_locked(e);
  apply_locked(e);
  return verdict;
}

IngestResult LayerStore::mark_finalized(const FinalizeMessage& msg) {
  std::lock_guard lock(mu_);
  if (dedupe_.count(msg.dedupe_id)) return IngestResult::duplicate();
  auto verdict = check_finalize_locked(msg);
  if (verdict.status != IngestStatus::kAccepted) return verdict;
  Envelope e;
  e.kind = MessageKind::kFinalize;
  e.finalize = msg;
  append_wal_locked(e);
  apply_locked(e);
  return verdict;
}

bool LayerStore::contains(const std::string& dedupe_id) const {
  std::lock_guard lock(mu_);
  return dedupe_.count(dedupe_id) > 0;
}

std::optional<RailcarLayers> LayerStore::railcar(const std::string& railcar_id) const {
  std::lock_guard lock(mu_);
  auto it = railcars_.find(railcar_id);
  if (it == railcars_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> LayerStore::railcar_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : railcars_) ids.push_back(id);
  return ids;
}

std::size_t LayerStore::record_count() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::string LayerStore::snapshot() const {
  std::lock_guard lock(mu_);
  std::ostringstream out;
  for (const auto& [id, car] : railcars_) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& [_, m] : car.layers) layers.push_back(m.to_json());
    nlohmann::json row = {{"railcar_id", id}, {"line", car.line}, {"layers", layers}};
    row["finalized"] = car.finalized ? car.finalized->to_json() : nlohmann::json();
    out << row.dump() << '\n';
  }
  return out.str();
}

}  // namespace scrap::pipeline
