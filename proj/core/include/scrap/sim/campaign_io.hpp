#pragma once

#include <filesystem>

#include "scrap/sim/campaign.hpp"

namespace scrap::sim {

// On-disk layout of a simulated campaign:
//   manifest.json        seed, config, config digest, noise floor
//   railcars.jsonl       {"railcar_id","line","start_ms","n_layers"}
//   features.jsonl       {"railcar_id","line","layer","features":[..]}
//   ground_truth.jsonl   {"railcar_id","contamination","grade","layers":[..],"peaks":[..]}
//   annotators.jsonl     annotator profiles
//   tracks/<id>.jsonl    detection track (see track_io.hpp)
void write_campaign(const Campaign& campaign, const std::filesystem::path& dir);

/// Reads a campaign back. The feature mixing matrix is not persisted.
Campaign load_campaign(const std::filesystem::path& dir);

}  // namespace scrap::sim
