#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "scrap/annotation/audit.hpp"
#include "scrap/annotation/engine.hpp"
#include "scrap/annotation/split.hpp"
#include "scrap/mil/model.hpp"
#include "scrap/sim/campaign.hpp"

namespace scrap::testing {

// A simulated campaign carried through annotation, the railcar split and
// dataset assembly, as the CLI does it.
struct Prepared {
  sim::Campaign campaign;
  std::vector<annotation::LabeledRow> rows;
  annotation::SplitAssignment split;
  sim::DatasetSplits data;
};

inline std::array<double, 3> ratios_of(const sim::CampaignConfig& cfg) {
  const double n = static_cast<double>(cfg.railcar_count());
  return {static_cast<double>(cfg.split_counts[0]) / n, static_cast<double>(cfg.split_counts[1]) / n,
          static_cast<double>(cfg.split_counts[2]) / n};
}

inline Prepared prepare(const sim::CampaignConfig& cfg, std::uint64_t split_seed = 17) {
  Prepared p;
  p.campaign = sim::gen_campaign(cfg);
  annotation::AuditLog audit;
  annotation::AnnotationConfig acfg;
  acfg.taxonomy = annotation::GradeTaxonomy(cfg.grade_names);
  annotation::AnnotationEngine engine(acfg, audit);
  sim::simulate_annotation(p.campaign, engine, acfg.seed);
  p.rows = engine.labeled_rows();
  std::vector<std::string> ids;
  for (const auto& r : p.rows) ids.push_back(r.railcar_id);
  p.split = annotation::split_by_railcar(ids, ratios_of(cfg), split_seed);
  p.data = sim::assemble_datasets(p.campaign, p.rows, p.split, acfg.taxonomy);
  return p;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("scrap-" + tag + "-" + std::to_string(rng() % 1000000000ULL));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::vector<double>> random_instances(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto& v : out)
    for (auto& x : v) x = d(rng);
  return out;
}

}  // namespace scrap::testing
