#include "scrap/pipeline/messages.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "scrap/common/error.hpp"
#include "scrap/segmentation/quality.hpp"

namespace scrap::pipeline {

namespace {

using nlohmann::json;

const json& field(const json& j, const char* name) {
  if (!j.is_object()) throw DataError("message is not an object");
  auto it = j.find(name);
  if (it == j.end()) throw DataError(std::string("missing field '") + name + "'");
  return *it;
}

std::string get_id(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_string() || v.get<std::string>().empty())
    throw DataError(std::string("field '") + name + "' must be a non-empty string");
  return v.get<std::string>();
}

std::int64_t get_int(const json& j, const char* name, std::int64_t min) {
  const auto& v = field(j, name);
  if (!v.is_number_integer()) throw DataError(std::string("field '") + name + "' must be an integer");
  const auto x = v.get<std::int64_t>();
  if (x < min) throw DataError(std::string("field '") + name + "' out of range");
  return x;
}

int get_schema(const json& j) {
  if (!j.contains("schema_version")) return kSchemaVersion;
  const auto v = get_int(j, "schema_version", 0);
  if (v != kSchemaVersion) throw DataError("unsupported schema_version " + std::to_string(v));
  return static_cast<int>(v);
}

bool known_flag(const std::string& s) {
  if (s == kRoiFlag) return true;
  try {
    segmentation::failure_code_from_string(s);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::mt19937_64 chaos_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xC4A05u};
  return std::mt19937_64(seq);
}

}  // namespace

json IngestMessage::to_json() const {
  json j = {{"dedupe_id", dedupe_id},
            {"line", line},
            {"railcar_id", railcar_id},
            {"layer_index", layer_index},
            {"features", features},
            {"quality_flags", quality_flags},
            {"timestamp_ms", timestamp_ms},
            {"schema_version", schema_version}};
  if (!iou.empty()) j["iou"] = iou;
  return j;
}

IngestMessage IngestMessage::from_json(const json& j) {
  IngestMessage m;
  m.schema_version = get_schema(j);
  m.dedupe_id = get_id(j, "dedupe_id");
  m.line = static_cast<int>(get_int(j, "line", 1));
  m.railcar_id = get_id(j, "railcar_id");
  m.layer_index = static_cast<std::size_t>(get_int(j, "layer_index", 0));
  m.timestamp_ms = get_int(j, "timestamp_ms", 0);
  const auto& f = field(j, "features");
  if (!f.is_array() || f.empty()) throw DataError("field 'features' must be a non-empty array");
  for (const auto& x : f) {
    if (!x.is_number() || !std::isfinite(x.get<double>()))
      throw DataError("field 'features' must hold finite numbers");
    m.features.push_back(x.get<double>());
  }
  if (j.contains("quality_flags")) {
    const auto& q = j.at("quality_flags");
    if (!q.is_array()) throw DataError("field 'quality_flags' must be an array");
    for (const auto& s : q) {
      if (!s.is_string() || !known_flag(s.get<std::string>()))
        throw DataError("unknown quality flag " + s.dump());
      m.quality_flags.push_back(s.get<std::string>());
    }
  }
  if (j.contains("iou")) {
    const auto& v = j.at("iou");
    if (!v.is_array()) throw DataError("field 'iou' must be an array");
    for (const auto& x : v) {
      if (!x.is_number()) throw DataError("field 'iou' must hold numbers");
      m.iou.push_back(x.get<double>());
    }
  }
  return m;
}

json FinalizeMessage::to_json() const {
  return {{"dedupe_id", dedupe_id},
          {"line", line},
          {"railcar_id", railcar_id},
          {"timestamp_ms", timestamp_ms},
          {"schema_version", schema_version}};
}

FinalizeMessage FinalizeMessage::from_json(const json& j) {
  FinalizeMessage m;
  m.schema_version = get_schema(j);
  m.dedupe_id = get_id(j, "dedupe_id");
  m.line = static_cast<int>(get_int(j, "line", 1));
  m.railcar_id = get_id(j, "railcar_id");
  m.timestamp_ms = get_int(j, "timestamp_ms", 0);
  return m;
}

json Envelope::to_json() const {
  json j = kind == MessageKind::kLayer ? layer.to_json() : finalize.to_json();
  j["kind"] = kind == MessageKind::kLayer ? "layer" : "finalize";
  return j;
}

Envelope Envelope::from_json(const json& j) {
  Envelope e;
  const auto& kind = field(j, "kind");
  if (kind == "layer") {
    e.kind = MessageKind::kLayer;
    e.layer = IngestMessage::from_json(j);
  } else if (kind == "finalize") {
    e.kind = MessageKind::kFinalize;
    e.finalize = FinalizeMessage::from_json(j);
  } else {
    throw DataError("unknown message kind " + kind.dump());
  }
  return e;
}

std::vector<Envelope> campaign_messages(const sim::Campaign& campaign) {
  std::vector<const sim::RailcarSim*> order;
  for (const auto& car : campaign.railcars) order.push_back(&car);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->start_ms < b->start_ms; });
  std::vector<Envelope> out;
  for (const auto* car : order) {
    const auto seg = segmentation::segment_track(car->track, sim::default_roi());
    const auto trace = car->track.iou_trace();
    std::int64_t last_ts = car->start_ms;
    for (std::size_t i = 0; i < car->layers.size(); ++i) {
      Envelope e;
      e.kind = MessageKind::kLayer;
      auto& m = e.layer;
      m.dedupe_id = car->railcar_id + ":L" + std::to_string(i);
      m.line = car->line;
      m.railcar_id = car->railcar_id;
      m.layer_index = car->layers[i].layer_index;
      m.features = car->layers[i].features;
      if (!seg.roi.conformant) {
        m.quality_flags.push_back(kRoiFlag);
        m.timestamp_ms = car->start_ms + static_cast<std::int64_t>(i) * 1000;
      } else if (i < seg.grabs.size()) {
        const auto& g = seg.grabs[i];
        for (auto c : g.failure_codes) m.quality_flags.push_back(segmentation::to_string(c));
        const std::size_t key = g.keyframes.empty() ? g.peak : g.keyframes.front();
        m.timestamp_ms = static_cast<std::int64_t>(std::llround(car->track.entries[key].timestamp * 1000.0));
        m.iou.assign(trace.begin() + static_cast<std::ptrdiff_t>(g.start),
                     trace.begin() + static_cast<std::ptrdiff_t>(g.end + 1));
      } else {
        throw DataError(car->railcar_id + ": fewer grabs than layers");
      }
      last_ts = std::max(last_ts, m.timestamp_ms);
      out.push_back(std::move(e));
    }
    Envelope fin;
    fin.kind = MessageKind::kFinalize;
    fin.finalize.dedupe_id = car->railcar_id + ":END";
    fin.finalize.line = car->line;
    fin.finalize.railcar_id = car->railcar_id;
    fin.finalize.timestamp_ms = last_ts + 1000;
    out.push_back(std::move(fin));
  }
  return out;
}

std::vector<Envelope> chaos_deliveries(const std::vector<Envelope>& messages, std::uint64_t seed,
                                       std::size_t max_deliveries) {
  if (max_deliveries == 0) throw ConfigError("max_deliveries must be ≥ 1");
  auto rng = chaos_rng(seed);
  std::uniform_int_distribution<std::size_t> copies(1, max_deliveries);
  std::vector<std::pair<double, std::size_t>> keyed;
  const double n = static_cast<double>(messages.size());
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const double pos = static_cast<double>(i);
    keyed.emplace_back(pos, i);
    const std::size_t k = copies(rng);
    std::uniform_real_distribution<double> later(pos + 0.5, n);
    for (std::size_t c = 1; c < k; ++c) keyed.emplace_back(later(rng), i);
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Envelope> out;
  out.reserve(keyed.size());
  for (const auto& [_, i] : keyed) out.push_back(messages[i]);
  return out;
}

std::vector<std::vector<Envelope>> partition_by_line(const std::vector<Envelope>& messages,
                                                     std::size_t lines) {
  std::vector<std::vector<Envelope>> parts(lines);
  for (const auto& m : messages) {
    const int line = m.line();
    if (line < 1 || static_cast<std::size_t>(line) > lines)
      throw DataError("message for unknown line " + std::to_string(line));
    parts[static_cast<std::size_t>(line - 1)].push_back(m);
  }
  return parts;
}

void write_messages(const std::vector<Envelope>& messages, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& m : messages) out << m.to_json().dump() << '\n';
}

std::vector<Envelope> read_messages(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::vector<Envelope> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(Envelope::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace scrap::pipeline
