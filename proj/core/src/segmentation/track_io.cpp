#include "scrap/segmentation/track_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "scrap/common/error.hpp"

namespace scrap::segmentation {
namespace {

nlohmann::json box_json(const Box& b) { return {b.x, b.y, b.w, b.h}; }

Box box_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("track: box must be [x,y,w,h]");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

nlohmann::json track_entry_to_json(const TrackEntry& e) {
  return {
      {"frame", e.frame},
      {"t", e.timestamp},
      {"magnet", box_json(e.magnet)},
      {"railcar", box_json(e.railcar)},
      {"centroid", {e.railcar_centroid.x, e.railcar_centroid.y}},
      {"quality",
       {{"blur", e.quality.blur},
        {"exposure", e.quality.exposure},
        {"aspect", e.quality.aspect_ratio},
        {"occluded", e.quality.occluded},
        {"extraneous", e.quality.extraneous_object},
        {"railcar_present", e.quality.railcar_present},
        {"checksum_ok", e.quality.checksum_ok}}},
  };
}

TrackEntry track_entry_from_json(const nlohmann::json& j) {
  try {
    TrackEntry e;
    e.frame = j.at("frame").get<long long>();
    e.timestamp = j.at("t").get<double>();
    e.magnet = box_from(j.at("magnet"));
    e.railcar = box_from(j.at("railcar"));
    const auto& c = j.at("centroid");
    if (!c.is_array() || c.size() != 2) throw DataError("track: centroid must be [x,y]");
    e.railcar_centroid = Point{c[0].get<double>(), c[1].get<double>()};
    if (j.contains("quality")) {
      const auto& q = j.at("quality");
      e.quality.blur = q.value("blur", e.quality.blur);
      e.quality.exposure = q.value("exposure", e.quality.exposure);
      e.quality.aspect_ratio = q.value("aspect", e.quality.aspect_ratio);
      e.quality.occluded = q.value("occluded", e.quality.occluded);
      e.quality.extraneous_object = q.value("extraneous", e.quality.extraneous_object);
      e.quality.railcar_present = q.value("railcar_present", e.quality.railcar_present);
      e.quality.checksum_ok = q.value("checksum_ok", e.quality.checksum_ok);
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("track: malformed entry: ") + ex.what());
  }
}

void write_track(std::ostream& out, const DetectionTrack& track) {
  for (const auto& e : track.entries) out << track_entry_to_json(e).dump() << '\n';
}

DetectionTrack read_track(std::istream& in) {
  DetectionTrack t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      t.entries.push_back(track_entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("track line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  t.validate();
  return t;
}

void save_track(const DetectionTrack& track, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_track(out, track);
}

DetectionTrack load_track(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_track(in);
}

}  // namespace scrap::segmentation
