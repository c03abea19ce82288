#pragma once

#include <filesystem>
#include <iosfwd>

#include "json.hpp"
#include "scrap/segmentation/segmenter.hpp"

namespace scrap::segmentation {

// One JSON object per line:
//   {"frame":12,"t":0.48,"magnet":[x,y,w,h],"railcar":[x,y,w,h],
//    "centroid":[cx,cy],"quality":{"blur":..,"exposure":..,"aspect":..,
//    "occluded":false,"extraneous":false,"railcar_present":true,
//    "checksum_ok":true}}
nlohmann::json track_entry_to_json(const TrackEntry& e);
TrackEntry track_entry_from_json(const nlohmann::json& j);

void write_track(std::ostream& out, const DetectionTrack& track);
DetectionTrack read_track(std::istream& in);

void save_track(const DetectionTrack& track, const std::filesystem::path& path);
DetectionTrack load_track(const std::filesystem::path& path);

}  // namespace scrap::segmentation
