#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scrap/pipeline/messages.hpp"

namespace scrap::pipeline {

enum class IngestStatus { kAccepted, kDuplicate, kRejected };

std::string to_string(IngestStatus s);

struct IngestResult {
  IngestStatus status = IngestStatus::kRejected;
  std::string reason;  // set for rejections

  static IngestResult accepted() { return {IngestStatus::kAccepted, {}}; }
  static IngestResult duplicate() { return {IngestStatus::kDuplicate, {}}; }
  static IngestResult rejected(std::string why) { return {IngestStatus::kRejected, std::move(why)}; }
};

struct RailcarLayers {
  std::string railcar_id;
  int line = 0;
  std::map<std::size_t, IngestMessage> layers;  // by layer index
  std::optional<FinalizeMessage> finalized;
};

// Exactly-once layer store. A dedupe id is inserted at most once; the
// first delivery of a message appends it to its line's write-ahead log
// before it becomes visible. Rejections and duplicates touch nothing.
//
// WAL layout: <dir>/line-<n>.wal.jsonl, one accepted envelope per line.
class LayerStore {
 public:
  explicit LayerStore(std::size_t lines = 6, std::optional<std::filesystem::path> wal_dir = {},
                      bool fsync = false);

  IngestResult insert(const IngestMessage& msg);
  IngestResult mark_finalized(const FinalizeMessage& msg);

  bool contains(const std::string& dedupe_id) const;
  std::optional<RailcarLayers> railcar(const std::string& railcar_id) const;
  std::vector<std::string> railcar_ids() const;
  std::size_t record_count() const;  // accepted layer messages
  std::size_t lines() const { return lines_; }

  /// Canonical dump: one JSON line per railcar sorted by id, layers by
  /// index. Independent of arrival interleaving across lines.
  std::string snapshot() const;

 private:
  IngestResult check_layer_locked(const IngestMessage& msg) const;
  IngestResult check_finalize_locked(const FinalizeMessage& msg) const;
  void apply_locked(const Envelope& e);
  void append_wal_locked(const Envelope& e);
  void recover();

  std::size_t lines_;
  std::optional<std::filesystem::path> dir_;
  bool fsync_;
  mutable std::mutex mu_;
  std::set<std::string> dedupe_;
  std::map<std::string, RailcarLayers> railcars_;
  std::size_t records_ = 0;
  std::vector<std::unique_ptr<std::FILE, int (*)(std::FILE*)>> wal_;
};

}  // namespace scrap::pipeline
