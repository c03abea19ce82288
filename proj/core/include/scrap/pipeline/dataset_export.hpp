#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scrap/annotation/engine.hpp"
#include "scrap/common/error.hpp"
#include "scrap/pipeline/layer_store.hpp"

namespace scrap::pipeline {

class TagCollision : public DataError {
 public:
  using DataError::DataError;
};

struct ExportResult {
  std::filesystem::path dir;
  std::string digest;  // sha256 of manifest.json
  std::size_t rows = 0;
  std::array<std::size_t, 3> counts{};
  bool reused = false;  // identical snapshot already present
};

// Snapshot <root>/<tag>/{rows.jsonl,manifest.json}. A row is a railcar with
// a final label and at least one eligible layer in the store; rows carry
// their split partition. Snapshots are immutable: re-exporting a tag with
// identical content is a no-op, differing content raises TagCollision.
ExportResult export_dataset(const std::string& tag, const LayerStore& store,
                            const std::vector<annotation::LabeledRow>& labels,
                            const std::array<double, 3>& split_ratios, std::uint64_t split_seed,
                            const std::filesystem::path& root);

}  // namespace scrap::pipeline
