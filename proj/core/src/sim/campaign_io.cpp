#include "scrap/sim/campaign_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "scrap/common/error.hpp"
#include "scrap/segmentation/track_io.hpp"

namespace scrap::sim {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::vector<nlohmann::json> read_jsonl(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace

void write_campaign(const Campaign& campaign, const fs::path& dir) {
  fs::create_directories(dir / "tracks");
  const auto& cfg = campaign.config;
  nlohmann::json manifest = {{"format", "scrap-campaign"},
                             {"format_version", 1},
                             {"seed", cfg.seed},
                             {"config", cfg.to_json()},
                             {"config_digest", cfg.digest()},
                             {"noise_floor", campaign.noise_floor},
                             {"railcars", campaign.railcars.size()}};
  open_out(dir / "manifest.json") << manifest.dump(2) << '\n';

  auto railcars = open_out(dir / "railcars.jsonl");
  auto features = open_out(dir / "features.jsonl");
  auto truth = open_out(dir / "ground_truth.jsonl");
  for (const auto& car : campaign.railcars) {
    railcars << nlohmann::json{{"railcar_id", car.railcar_id},
                               {"line", car.line},
                               {"start_ms", car.start_ms},
                               {"n_layers", car.layers.size()}}
                    .dump()
             << '\n';
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : car.layers) {
      features << nlohmann::json{{"railcar_id", car.railcar_id},
                                 {"line", car.line},
                                 {"layer", l.layer_index},
                                 {"features", l.features}}
                      .dump()
               << '\n';
      layers.push_back({{"layer", l.layer_index}, {"contamination", l.contamination}, {"hot", l.hot}});
    }
    truth << nlohmann::json{{"railcar_id", car.railcar_id},
                            {"contamination", car.contamination},
                            {"grade", cfg.grade_names.at(car.grade)},
                            {"layers", layers},
                            {"peaks", car.peak_positions}}
                 .dump()
          << '\n';
    segmentation::save_track(car.track, dir / "tracks" / (car.railcar_id + ".jsonl"));
  }
  auto annotators = open_out(dir / "annotators.jsonl");
  for (const auto& a : campaign.annotators) annotators << a.to_json().dump() << '\n';
}

Campaign load_campaign(const fs::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) throw DataError("no campaign manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(min);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest.json: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "scrap-campaign")
    throw DataError(dir.string() + " is not a campaign directory");
  Campaign c;
  c.config = CampaignConfig::from_json(manifest.at("config"));
  if (manifest.at("config_digest").get<std::string>() != c.config.digest())
    throw IntegrityError("campaign config digest mismatch");
  c.noise_floor = manifest.at("noise_floor").get<double>();

  std::map<std::string, std::size_t> index;
  for (const auto& r : read_jsonl(dir / "railcars.jsonl")) {
    RailcarSim car;
    car.railcar_id = r.at("railcar_id").get<std::string>();
    car.line = r.at("line").get<int>();
    car.start_ms = r.at("start_ms").get<std::int64_t>();
    car.layers.resize(r.at("n_layers").get<std::size_t>());
    index[car.railcar_id] = c.railcars.size();
    c.railcars.push_back(std::move(car));
  }
  auto lookup = [&](const nlohmann::json& r) -> RailcarSim& {
    auto it = index.find(r.at("railcar_id").get<std::string>());
    if (it == index.end()) throw DataError("record for unknown railcar " + r.dump());
    return c.railcars[it->second];
  };
  for (const auto& r : read_jsonl(dir / "features.jsonl")) {
    auto& car = lookup(r);
    const auto layer = r.at("layer").get<std::size_t>();
    if (layer >= car.layers.size()) throw DataError(car.railcar_id + ": layer out of range");
    car.layers[layer].layer_index = layer;
    car.layers[layer].features = r.at("features").get<std::vector<double>>();
  }
  const auto& names = c.config.grade_names;
  for (const auto& r : read_jsonl(dir / "ground_truth.jsonl")) {
    auto& car = lookup(r);
    car.contamination = r.at("contamination").get<double>();
    const auto g = r.at("grade").get<std::string>();
    auto it = std::find(names.begin(), names.end(), g);
    if (it == names.end()) throw DataError("unknown grade " + g);
    car.grade = static_cast<std::size_t>(it - names.begin());
    for (const auto& l : r.at("layers")) {
      const auto layer = l.at("layer").get<std::size_t>();
      if (layer >= car.layers.size()) throw DataError(car.railcar_id + ": layer out of range");
      car.layers[layer].contamination = l.at("contamination").get<double>();
      car.layers[layer].hot = l.at("hot").get<bool>();
    }
    car.peak_positions = r.at("peaks").get<std::vector<std::size_t>>();
  }
  for (auto& car : c.railcars) car.track = segmentation::load_track(dir / "tracks" / (car.railcar_id + ".jsonl"));
  for (const auto& r : read_jsonl(dir / "annotators.jsonl")) c.annotators.push_back(AnnotatorProfile::from_json(r));
  return c;
}

}  // namespace scrap::sim
