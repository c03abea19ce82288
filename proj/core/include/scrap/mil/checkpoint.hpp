#pragma once

#include <filesystem>
#include <string>

#include "scrap/mil/model.hpp"

namespace scrap::mil {

// Checkpoints are a single JSON document: dims, class names, training
// metadata and every parameter tensor, plus a SHA-256 over the canonical
// dump of everything except the hash field itself.
inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json checkpoint_to_json(const MilModel& model);
MilModel checkpoint_from_json(const nlohmann::json& doc);  // verifies the hash

void save_checkpoint(const MilModel& model, const std::filesystem::path& path);
/// Throws IntegrityError on hash mismatch, DataError on malformed content.
MilModel load_checkpoint(const std::filesystem::path& path);

/// Content hash recorded in a saved checkpoint (recomputed, not read).
std::string checkpoint_hash(const MilModel& model);

}  // namespace scrap::mil
