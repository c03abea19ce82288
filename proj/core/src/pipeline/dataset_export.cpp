#include "scrap/pipeline/dataset_export.hpp"

#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "scrap/annotation/split.hpp"
#include "scrap/common/digest.hpp"

namespace scrap::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spill(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out.flush()) throw DataError("cannot write " + p.string());
}

}  // namespace

ExportResult export_dataset(const std::string& tag, const LayerStore& store,
                            const std::vector<annotation::LabeledRow>& labels,
                            const std::array<double, 3>& split_ratios, std::uint64_t split_seed,
                            const fs::path& root) {
  static const std::regex valid(R"([A-Za-z0-9._-]+)");
  if (!std::regex_match(tag, valid) || tag == "." || tag == "..") throw ConfigError("invalid dataset tag '" + tag + "'");

  std::map<std::string, const annotation::LabeledRow*> label_of;
  for (const auto& l : labels) label_of[l.railcar_id] = &l;

  std::map<std::string, RailcarLayers> rows;
  for (const auto& id : store.railcar_ids()) {
    if (!label_of.count(id)) continue;
    auto car = store.railcar(id);
    bool any = false;
    for (const auto& [_, m] : car->layers) any = any || m.eligible();
    if (any) rows.emplace(id, std::move(*car));
  }
  std::vector<std::string> ids;
  for (const auto& [id, _] : rows) ids.push_back(id);
  const auto split = annotation::split_by_railcar(ids, split_ratios, split_seed);

  std::ostringstream body;
  for (const auto& [id, car] : rows) {
    const auto& l = *label_of.at(id);
    json layers = json::array();
    for (const auto& [idx, m] : car.layers)
      layers.push_back({{"layer_index", idx}, {"features", m.features}, {"quality_flags", m.quality_flags}});
    body << json{{"railcar_id", id},
                 {"partition", annotation::to_string(split.railcar_partition.at(id))},
                 {"contamination", l.contamination},
                 {"grade", l.grade},
                 {"dispersion", l.dispersion},
                 {"provenance", l.provenance},
                 {"layers", layers}}
                .dump()
         << '\n';
  }
  const std::string rows_text = body.str();
  const json manifest = {{"format", "scrap-dataset"},
                         {"format_version", 1},
                         {"tag", tag},
                         {"rows", rows.size()},
                         {"counts", {{"train", split.counts[0]}, {"val", split.counts[1]}, {"test", split.counts[2]}}},
                         {"split_ratios", split_ratios},
                         {"split_seed", split_seed},
                         {"rows_sha256", sha256_hex(rows_text)}};
  const std::string manifest_text = manifest.dump(2) + "\n";

  ExportResult out;
  out.dir = root / tag;
  out.digest = sha256_hex(manifest_text);
  out.rows = rows.size();
  out.counts = split.counts;
  if (fs::exists(out.dir)) {
    if (slurp(out.dir / "manifest.json") == manifest_text && slurp(out.dir / "rows.jsonl") == rows_text) {
      out.reused = true;
      return out;
    }
    throw TagCollision("dataset tag '" + tag + "' already exists with different content");
  }
  fs::create_directories(root);
  const fs::path staging = root / ("." + tag + ".tmp");
  fs::remove_all(staging);
  fs::create_directories(staging);
  spill(staging / "rows.jsonl", rows_text);
  spill(staging / "manifest.json", manifest_text);
  fs::rename(staging, out.dir);
  return out;
}

}  // namespace scrap::pipeline
