#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "scrap/sim/campaign.hpp"

namespace scrap::pipeline {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kRoiFlag = "ROI_NONCONFORMANT";

struct IngestMessage {
  std::string dedupe_id;
  int line = 0;
  std::string railcar_id;
  std::size_t layer_index = 0;
  std::vector<double> features;
  std::vector<std::string> quality_flags;  // failure codes; empty ⇔ eligible
  std::int64_t timestamp_ms = 0;
  int schema_version = kSchemaVersion;
  std::vector<double> iou;  // IoU samples of the grab interval, optional

  bool eligible() const { return quality_flags.empty(); }
  nlohmann::json to_json() const;
  /// Throws DataError naming the offending field on any schema violation.
  static IngestMessage from_json(const nlohmann::json& j);
};

// Unloading end signal for one railcar.
struct FinalizeMessage {
  std::string dedupe_id;
  int line = 0;
  std::string railcar_id;
  std::int64_t timestamp_ms = 0;
  int schema_version = kSchemaVersion;

  nlohmann::json to_json() const;
  static FinalizeMessage from_json(const nlohmann::json& j);
};

enum class MessageKind { kLayer, kFinalize };

struct Envelope {
  MessageKind kind = MessageKind::kLayer;
  IngestMessage layer;
  FinalizeMessage finalize;

  int line() const { return kind == MessageKind::kLayer ? layer.line : finalize.line; }
  const std::string& railcar_id() const {
    return kind == MessageKind::kLayer ? layer.railcar_id : finalize.railcar_id;
  }
  const std::string& dedupe_id() const {
    return kind == MessageKind::kLayer ? layer.dedupe_id : finalize.dedupe_id;
  }
  /// {"kind":"layer"|"finalize", ...message fields}
  nlohmann::json to_json() const;
  static Envelope from_json(const nlohmann::json& j);
};

/// The production message stream of a campaign: each railcar's tracks are
/// segmented, every grab becomes one layer message (keyframe features,
/// failure codes, IoU samples) followed by a finalize message. Railcars
/// appear in unloading order.
std::vector<Envelope> campaign_messages(const sim::Campaign& campaign);

/// Every message delivered 1..max_deliveries times. First deliveries keep
/// their relative order; redeliveries land at seeded positions after the
/// original.
std::vector<Envelope> chaos_deliveries(const std::vector<Envelope>& messages, std::uint64_t seed,
                                       std::size_t max_deliveries = 5);

/// Splits a stream into per-line partitions, preserving order.
std::vector<std::vector<Envelope>> partition_by_line(const std::vector<Envelope>& messages,
                                                     std::size_t lines);

void write_messages(const std::vector<Envelope>& messages, const std::string& path);
std::vector<Envelope> read_messages(const std::string& path);

}  // namespace scrap::pipeline
