#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "scrap/annotation/engine.hpp"
#include "scrap/annotation/split.hpp"
#include "scrap/mil/bag.hpp"
#include "scrap/segmentation/segmenter.hpp"
#include "scrap/tensor/tensor.hpp"

namespace scrap::sim {

struct AnnotatorProfile {
  std::string rater_id;
  double bias = 0.0;         // additive, percent
  double scale = 1.0;        // multiplicative width
  double noise_sigma = 0.3;  // percent
  double grade_error = 0.05; // probability of naming a wrong grade

  void validate() const;
  nlohmann::json to_json() const;
  static AnnotatorProfile from_json(const nlohmann::json& j);
};

struct CampaignConfig {
  std::array<std::size_t, 3> split_counts{300, 60, 45};  // train / val / test railcars
  std::size_t layers_min = 8;
  std::size_t layers_max = 14;
  std::size_t lines = 6;
  double contamination_min = 0.0;
  double contamination_max = 5.0;
  std::vector<double> grade_prior{0.25, 0.25, 0.25, 0.25};
  std::vector<std::string> grade_names{"3A", "3A1", "3AH", "CAST_IRON"};
  std::size_t feature_dim = 32;
  double feature_sigma = 1.0;
  double grade_effect = 2.0;   // weight of the grade one-hot in the mixing input
  double layer_spread = 0.0;   // ± relative layer-to-layer heterogeneity
  double p_hot = 0.0;          // probability a layer carries hot_factor × contamination
  double hot_factor = 5.0;
  int hot_layers = -1;         // ≥ 0: exactly this many hot layers per railcar instead of p_hot
  std::size_t frames_per_grab = 15;
  std::size_t valley_frames = 6;
  double iou_noise = 0.02;
  double p_frame_fault = 0.03;  // single frame fails a quality rule
  double p_grab_fault = 0.02;   // every frame of a grab fails (layer ineligible)
  double p_roi_fault = 0.0;     // railcar parked outside the ROI
  std::vector<AnnotatorProfile> annotators;  // empty → three unbiased σ=0.3 raters
  AnnotatorProfile senior{"senior-1", 0.0, 1.0, 0.1, 0.0};
  std::size_t raters_per_item = 3;
  std::uint64_t seed = 2024;

  std::size_t railcar_count() const { return split_counts[0] + split_counts[1] + split_counts[2]; }
  void validate() const;
  nlohmann::json to_json() const;
  static CampaignConfig from_json(const nlohmann::json& j);
  /// sha256 of the canonical config dump.
  std::string digest() const;
};

struct LayerSim {
  std::size_t layer_index = 0;
  double contamination = 0.0;
  bool hot = false;
  std::vector<double> features;
};

struct RailcarSim {
  std::string railcar_id;
  int line = 1;
  std::size_t grade = 0;
  double contamination = 0.0;  // mean of layer contaminations
  std::int64_t start_ms = 0;
  std::vector<LayerSim> layers;
  segmentation::DetectionTrack track;
  std::vector<std::size_t> peak_positions;  // construction-time IoU peaks
};

struct Campaign {
  CampaignConfig config;
  tensor::Tensor2D mixing;  // feature_dim × (1 + grades)
  std::vector<RailcarSim> railcars;
  std::vector<AnnotatorProfile> annotators;
  double noise_floor = 0.0;
};

/// Region of interest every simulated railcar centroid is expected in.
segmentation::Box default_roi();

/// Deterministic for a fixed seed.
Campaign gen_campaign(const CampaignConfig& cfg);

struct IouTrace {
  std::vector<double> values;
  std::vector<std::size_t> peaks;
};

/// n_grabs raised-sine humps (peak 0.35-0.65) separated by valleys of
/// uniform noise in [0, baseline_noise), baseline_noise < default τ_lo.
IouTrace gen_iou_trace(std::size_t n_grabs, std::size_t frames_per_grab, double baseline_noise,
                       std::mt19937_64& rng, std::size_t valley_frames = 6);

/// clamp(bias + scale·truth + N(0, σ), 0, 100).
double annotate_sim(const AnnotatorProfile& profile, double truth, std::mt19937_64& rng);
std::size_t annotate_grade_sim(const AnnotatorProfile& profile, std::size_t truth,
                               std::size_t class_num, std::mt19937_64& rng);

/// Expected MAE between the k-rater consensus and ground truth. Closed
/// form (folded normal) when the panel is fixed and every scale is 1;
/// seeded Monte-Carlo over the contamination prior otherwise.
double noise_floor(const CampaignConfig& cfg, const std::vector<AnnotatorProfile>& profiles);

std::vector<AnnotatorProfile> default_annotators();

/// Builds a bag by running the production segmenter over the railcar's
/// track; layer i of the railcar is grab i. Ineligible grabs keep their
/// failure codes as instance quality flags.
mil::Bag bag_from_railcar(const RailcarSim& car, const segmentation::SegmentParams& params = {});

struct AnnotationRun {
  std::size_t adjudicated = 0;
  std::size_t flagged = 0;
  std::size_t tiebreaks = 0;
};

/// Drives the double-blind engine for every railcar: route, simulated
/// rater submissions, then senior adjudication of the inbox.
AnnotationRun simulate_annotation(const Campaign& campaign, annotation::AnnotationEngine& engine,
                                  std::uint64_t seed);

struct DatasetSplits {
  mil::Dataset train;
  mil::Dataset val;
  mil::Dataset test;
};

/// Joins final labels to bags and partitions them by the split assignment.
DatasetSplits assemble_datasets(const Campaign& campaign,
                                const std::vector<annotation::LabeledRow>& rows,
                                const annotation::SplitAssignment& split,
                                const annotation::GradeTaxonomy& taxonomy);

}  // namespace scrap::sim
