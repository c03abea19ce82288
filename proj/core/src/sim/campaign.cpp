#include "scrap/sim/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include "scrap/common/digest.hpp"
#include "scrap/common/error.hpp"

namespace scrap::sim {

namespace {

constexpr double kFps = 25.0;
constexpr std::int64_t kCampaignEpochMs = 1'700'000'000'000;
constexpr std::int64_t kRailcarSpacingMs = 600'000;

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::string railcar_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "RC-%05zu", i + 1);
  return buf;
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// E|X| for X ~ N(mu, sigma²), written as |mu| + 2σ(φ(a) − a·Q(a)) so the
// result never drops below |mu| through cancellation.
double folded_normal_mean(double mu, double sigma) {
  const double m = std::abs(mu);
  if (sigma <= 0.0) return m;
  const double a = m / sigma;
  const double phi = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  const double q = std_normal_cdf(-a);
  return m + 2.0 * sigma * std::max(0.0, phi - a * q);
}

segmentation::FrameQuality nominal_quality(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> blur(0.0, 0.3);
  std::uniform_real_distribution<double> exposure(0.35, 0.65);
  segmentation::FrameQuality q;
  q.blur = blur(rng);
  q.exposure = exposure(rng);
  q.aspect_ratio = 1.6;
  return q;
}

void inject_fault(segmentation::FrameQuality& q, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 4);
  switch (pick(rng)) {
    case 0: q.blur = 0.8; break;
    case 1: q.exposure = 0.05; break;
    case 2: q.exposure = 0.95; break;
    case 3: q.occluded = true; break;
    default: q.extraneous_object = true; break;
  }
}

}  // namespace

void AnnotatorProfile::validate() const {
  if (rater_id.empty()) throw ConfigError("annotator profile without rater_id");
  if (!(noise_sigma >= 0.0) || !std::isfinite(bias) || !(scale > 0.0))
    throw ConfigError("annotator " + rater_id + ": invalid bias/scale/noise");
  if (!(grade_error >= 0.0 && grade_error <= 1.0))
    throw ConfigError("annotator " + rater_id + ": grade_error outside [0,1]");
}

nlohmann::json AnnotatorProfile::to_json() const {
  return {{"rater_id", rater_id},
          {"bias", bias},
          {"scale", scale},
          {"noise_sigma", noise_sigma},
          {"grade_error", grade_error}};
}

AnnotatorProfile AnnotatorProfile::from_json(const nlohmann::json& j) {
  AnnotatorProfile p;
  p.rater_id = j.at("rater_id").get<std::string>();
  p.bias = j.value("bias", 0.0);
  p.scale = j.value("scale", 1.0);
  p.noise_sigma = j.value("noise_sigma", 0.3);
  p.grade_error = j.value("grade_error", 0.05);
  p.validate();
  return p;
}

std::vector<AnnotatorProfile> default_annotators() {
  return {{"rater-1", 0.0, 1.0, 0.3, 0.05},
          {"rater-2", 0.0, 1.0, 0.3, 0.05},
          {"rater-3", 0.0, 1.0, 0.3, 0.05}};
}

void CampaignConfig::validate() const {
  if (railcar_count() == 0) throw ConfigError("campaign has no railcars");
  if (layers_min == 0 || layers_min > layers_max) throw ConfigError("invalid layer range");
  if (lines == 0) throw ConfigError("campaign needs at least one line");
  if (!(contamination_min >= 0.0 && contamination_max <= 100.0 &&
        contamination_min <= contamination_max))
    throw ConfigError("contamination prior outside [0,100]");
  if (grade_prior.size() != grade_names.size() || grade_names.empty())
    throw ConfigError("grade_prior and grade_names differ in length");
  if (std::any_of(grade_prior.begin(), grade_prior.end(), [](double p) { return !(p >= 0.0); }) ||
      std::accumulate(grade_prior.begin(), grade_prior.end(), 0.0) <= 0.0)
    throw ConfigError("grade_prior must be non-negative with positive mass");
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (!(feature_sigma >= 0.0)) throw ConfigError("feature_sigma must be non-negative");
  if (!(layer_spread >= 0.0 && layer_spread < 1.0)) throw ConfigError("layer_spread in [0,1)");
  if (!(p_hot >= 0.0 && p_hot <= 1.0)) throw ConfigError("p_hot outside [0,1]");
  if (!(hot_factor >= 1.0)) throw ConfigError("hot_factor must be ≥ 1");
  if (hot_layers > static_cast<int>(layers_min)) throw ConfigError("hot_layers exceeds layers_min");
  if (frames_per_grab < 3) throw ConfigError("frames_per_grab must be ≥ 3");
  if (valley_frames < 1) throw ConfigError("valley_frames must be ≥ 1");
  if (!(iou_noise >= 0.0 && iou_noise < 0.05)) throw ConfigError("iou_noise must be in [0, 0.05)");
  for (double p : {p_frame_fault, p_grab_fault, p_roi_fault})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("fault probability outside [0,1]");
  if (raters_per_item < 3) throw ConfigError("raters_per_item must be ≥ 3");
  const auto panel = annotators.empty() ? default_annotators() : annotators;
  if (panel.size() < raters_per_item) throw ConfigError("annotator pool smaller than raters_per_item");
  std::set<std::string> ids;
  for (const auto& a : panel) {
    a.validate();
    if (!ids.insert(a.rater_id).second) throw ConfigError("duplicate annotator " + a.rater_id);
  }
  senior.validate();
}

nlohmann::json CampaignConfig::to_json() const {
  nlohmann::json ann = nlohmann::json::array();
  for (const auto& a : annotators) ann.push_back(a.to_json());
  return {{"split_counts", split_counts},
          {"layers_min", layers_min},
          {"layers_max", layers_max},
          {"lines", lines},
          {"contamination_min", contamination_min},
          {"contamination_max", contamination_max},
          {"grade_prior", grade_prior},
          {"grade_names", grade_names},
          {"feature_dim", feature_dim},
          {"feature_sigma", feature_sigma},
          {"grade_effect", grade_effect},
          {"layer_spread", layer_spread},
          {"p_hot", p_hot},
          {"hot_factor", hot_factor},
          {"hot_layers", hot_layers},
          {"frames_per_grab", frames_per_grab},
          {"valley_frames", valley_frames},
          {"iou_noise", iou_noise},
          {"p_frame_fault", p_frame_fault},
          {"p_grab_fault", p_grab_fault},
          {"p_roi_fault", p_roi_fault},
          {"annotators", ann},
          {"senior", senior.to_json()},
          {"raters_per_item", raters_per_item},
          {"seed", seed}};
}

CampaignConfig CampaignConfig::from_json(const nlohmann::json& j) {
  CampaignConfig c;
  try {
    if (j.contains("split_counts")) c.split_counts = j.at("split_counts").get<std::array<std::size_t, 3>>();
    c.layers_min = j.value("layers_min", c.layers_min);
    c.layers_max = j.value("layers_max", c.layers_max);
    c.lines = j.value("lines", c.lines);
    c.contamination_min = j.value("contamination_min", c.contamination_min);
    c.contamination_max = j.value("contamination_max", c.contamination_max);
    c.grade_prior = j.value("grade_prior", c.grade_prior);
    c.grade_names = j.value("grade_names", c.grade_names);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.feature_sigma = j.value("feature_sigma", c.feature_sigma);
    c.grade_effect = j.value("grade_effect", c.grade_effect);
    c.layer_spread = j.value("layer_spread", c.layer_spread);
    c.p_hot = j.value("p_hot", c.p_hot);
    c.hot_factor = j.value("hot_factor", c.hot_factor);
    c.hot_layers = j.value("hot_layers", c.hot_layers);
    c.frames_per_grab = j.value("frames_per_grab", c.frames_per_grab);
    c.valley_frames = j.value("valley_frames", c.valley_frames);
    c.iou_noise = j.value("iou_noise", c.iou_noise);
    c.p_frame_fault = j.value("p_frame_fault", c.p_frame_fault);
    c.p_grab_fault = j.value("p_grab_fault", c.p_grab_fault);
    c.p_roi_fault = j.value("p_roi_fault", c.p_roi_fault);
    if (j.contains("annotators"))
      for (const auto& a : j.at("annotators")) c.annotators.push_back(AnnotatorProfile::from_json(a));
    if (j.contains("senior")) c.senior = AnnotatorProfile::from_json(j.at("senior"));
    c.raters_per_item = j.value("raters_per_item", c.raters_per_item);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("campaign config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string CampaignConfig::digest() const { return sha256_hex(to_json().dump()); }

segmentation::Box default_roi() { return {50.0, 150.0, 700.0, 340.0}; }

IouTrace gen_iou_trace(std::size_t n_grabs, std::size_t frames_per_grab, double baseline_noise,
                       std::mt19937_64& rng, std::size_t valley_frames) {
  if (frames_per_grab < 3) throw ConfigError("frames_per_grab must be ≥ 3");
  if (!(baseline_noise >= 0.0 && baseline_noise < 0.05))
    throw ConfigError("baseline_noise must be in [0, 0.05)");
  if (valley_frames < 1) throw ConfigError("valley_frames must be ≥ 1");
  std::uniform_real_distribution<double> valley(0.0, 1.0);
  std::uniform_real_distribution<double> height(0.35, 0.65);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  IouTrace out;
  auto push_valley = [&] {
    for (std::size_t i = 0; i < valley_frames; ++i) out.values.push_back(valley(rng) * baseline_noise);
  };
  push_valley();
  const double f1 = static_cast<double>(frames_per_grab + 1);
  const double hump_noise = 0.25 * baseline_noise;
  for (std::size_t g = 0; g < n_grabs; ++g) {
    const double h = height(rng);
    const std::size_t base = out.values.size();
    std::size_t peak = base;
    for (std::size_t i = 0; i < frames_per_grab; ++i) {
      const double shape = std::sin(std::numbers::pi * static_cast<double>(i + 1) / f1);
      const double v = std::clamp(h * shape + hump_noise * jitter(rng), 0.0, 1.0);
      out.values.push_back(v);
      if (v > out.values[peak]) peak = out.values.size() - 1;
    }
    out.peaks.push_back(peak);
    push_valley();
  }
  return out;
}

double annotate_sim(const AnnotatorProfile& profile, double truth, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, profile.noise_sigma);
  const double eps = profile.noise_sigma > 0.0 ? noise(rng) : 0.0;
  return std::clamp(profile.bias + profile.scale * truth + eps, 0.0, 100.0);
}

std::size_t annotate_grade_sim(const AnnotatorProfile& profile, std::size_t truth,
                               std::size_t class_num, std::mt19937_64& rng) {
  if (truth >= class_num) throw DataError("grade index out of range");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (class_num < 2 || u(rng) >= profile.grade_error) return truth;
  std::uniform_int_distribution<std::size_t> other(0, class_num - 2);
  const std::size_t g = other(rng);
  return g >= truth ? g + 1 : g;
}

double noise_floor(const CampaignConfig& cfg, const std::vector<AnnotatorProfile>& profiles) {
  const std::size_t k = cfg.raters_per_item;
  if (profiles.size() < k) throw ConfigError("annotator pool smaller than raters_per_item");
  const bool fixed_panel = profiles.size() == k;
  const bool unit_scale =
      std::all_of(profiles.begin(), profiles.end(), [](const auto& p) { return p.scale == 1.0; });
  if (fixed_panel && unit_scale) {
    double mu = 0.0, var = 0.0;
    for (const auto& p : profiles) {
      mu += p.bias;
      var += p.noise_sigma * p.noise_sigma;
    }
    const double kd = static_cast<double>(k);
    return folded_normal_mean(mu / kd, std::sqrt(var) / kd);
  }
  constexpr int kTrials = 20000;
  auto rng = derived_rng(cfg.seed, 0xF100);
  std::uniform_real_distribution<double> prior(cfg.contamination_min, cfg.contamination_max);
  std::vector<std::size_t> idx(profiles.size());
  double total = 0.0;
  for (int t = 0; t < kTrials; ++t) {
    const double truth = prior(rng);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    double sum = 0.0;
    for (std::size_t r = 0; r < k; ++r) sum += annotate_sim(profiles[idx[r]], truth, rng);
    total += std::abs(sum / static_cast<double>(k) - truth);
  }
  return total / kTrials;
}

namespace {

RailcarSim gen_railcar(const CampaignConfig& cfg, const tensor::Tensor2D& mixing, std::size_t index) {
  auto rng = derived_rng(cfg.seed, 0xCA5, index);
  RailcarSim car;
  car.railcar_id = railcar_name(index);
  car.line = static_cast<int>(index % cfg.lines) + 1;
  car.start_ms = kCampaignEpochMs + static_cast<std::int64_t>(index / cfg.lines) * kRailcarSpacingMs;

  std::uniform_real_distribution<double> prior(cfg.contamination_min, cfg.contamination_max);
  std::discrete_distribution<std::size_t> grade(cfg.grade_prior.begin(), cfg.grade_prior.end());
  std::uniform_int_distribution<std::size_t> layers(cfg.layers_min, cfg.layers_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double truth = prior(rng);
  car.grade = grade(rng);
  const std::size_t n = layers(rng);

  std::vector<double> w(n);
  std::vector<bool> hot(n);
  if (cfg.hot_layers >= 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int h = 0; h < cfg.hot_layers; ++h) hot[order[static_cast<std::size_t>(h)]] = true;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (cfg.hot_layers < 0) hot[j] = unit(rng) < cfg.p_hot;
    w[j] = (1.0 + cfg.layer_spread * sym(rng)) * (hot[j] ? cfg.hot_factor : 1.0);
  }
  const double w_mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(n);

  const std::size_t grades = cfg.grade_names.size();
  std::vector<double> x(1 + grades, 0.0);
  x[1 + car.grade] = cfg.grade_effect;
  double c_sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    LayerSim layer;
    layer.layer_index = j;
    layer.contamination = truth * w[j] / w_mean;
    layer.hot = hot[j];
    c_sum += layer.contamination;
    x[0] = layer.contamination;
    layer.features.resize(cfg.feature_dim);
    for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
      double v = 0.0;
      for (std::size_t c = 0; c < x.size(); ++c) v += mixing(d, c) * x[c];
      layer.features[d] = v + cfg.feature_sigma * noise(rng);
    }
    car.layers.push_back(std::move(layer));
  }
  car.contamination = c_sum / static_cast<double>(n);

  // Detection track: fixed railcar box, magnet box centred inside it with
  // area IoU·A so that IoU(magnet, railcar) equals the generated trace.
  const auto trace = gen_iou_trace(n, cfg.frames_per_grab, cfg.iou_noise, rng, cfg.valley_frames);
  car.peak_positions = trace.peaks;
  const bool roi_fault = unit(rng) < cfg.p_roi_fault;
  const segmentation::Box rail{100.0 + 2.0 * sym(rng), 200.0 + 2.0 * sym(rng), 600.0, 240.0};
  const double cx = rail.x + rail.w / 2.0;
  const double cy = rail.y + rail.h / 2.0;

  std::vector<bool> grab_fault(n);
  for (std::size_t j = 0; j < n; ++j) grab_fault[j] = unit(rng) < cfg.p_grab_fault;
  const std::size_t period = cfg.frames_per_grab + cfg.valley_frames;

  for (std::size_t f = 0; f < trace.values.size(); ++f) {
    segmentation::TrackEntry e;
    e.frame = static_cast<long long>(f);
    e.timestamp = static_cast<double>(car.start_ms) / 1000.0 + static_cast<double>(f) / kFps;
    e.railcar = rail;
    const double s = std::sqrt(trace.values[f]);
    e.magnet = {cx - rail.w * s / 2.0, cy - rail.h * s / 2.0, rail.w * s, rail.h * s};
    e.railcar_centroid = roi_fault ? segmentation::Point{900.0, cy} : segmentation::Point{cx + sym(rng), cy + sym(rng)};
    e.quality = nominal_quality(rng);
    if (unit(rng) < cfg.p_frame_fault) inject_fault(e.quality, rng);
    if (f >= cfg.valley_frames) {
      const std::size_t g = (f - cfg.valley_frames) / period;
      const std::size_t off = (f - cfg.valley_frames) % period;
      if (g < n && off < cfg.frames_per_grab && grab_fault[g]) e.quality.occluded = true;
    }
    car.track.entries.push_back(e);
  }
  return car;
}

}  // namespace

Campaign gen_campaign(const CampaignConfig& cfg) {
  cfg.validate();
  Campaign out;
  out.config = cfg;
  out.annotators = cfg.annotators.empty() ? default_annotators() : cfg.annotators;
  const std::size_t cols = 1 + cfg.grade_names.size();
  out.mixing = tensor::Tensor2D(cfg.feature_dim, cols);
  auto mrng = derived_rng(cfg.seed, 0x313);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t d = 0; d < cfg.feature_dim; ++d)
    for (std::size_t c = 0; c < cols; ++c) out.mixing(d, c) = normal(mrng);
  const std::size_t n = cfg.railcar_count();
  out.railcars.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.railcars.push_back(gen_railcar(cfg, out.mixing, i));
  out.noise_floor = noise_floor(cfg, out.annotators);
  return out;
}

mil::Bag bag_from_railcar(const RailcarSim& car, const segmentation::SegmentParams& params) {
  const auto seg = segmentation::segment_track(car.track, default_roi(), params);
  mil::Bag bag;
  bag.railcar_id = car.railcar_id;
  if (!seg.roi.conformant) {
    for (const auto& layer : car.layers)
      bag.instances.push_back({layer.layer_index, layer.features, {"ROI_NONCONFORMANT"}});
    return bag;
  }
  if (seg.grabs.size() != car.layers.size())
    throw DataError(car.railcar_id + ": segmented " + std::to_string(seg.grabs.size()) +
                    " grabs for " + std::to_string(car.layers.size()) + " layers");
  for (std::size_t i = 0; i < car.layers.size(); ++i) {
    mil::Instance inst{car.layers[i].layer_index, car.layers[i].features, {}};
    for (auto code : seg.grabs[i].failure_codes) inst.quality_flags.push_back(segmentation::to_string(code));
    bag.instances.push_back(std::move(inst));
  }
  return bag;
}

AnnotationRun simulate_annotation(const Campaign& campaign, annotation::AnnotationEngine& engine,
                                  std::uint64_t seed) {
  auto rng = derived_rng(seed, 0xA77);
  std::map<std::string, const AnnotatorProfile*> by_id;
  std::vector<std::string> pool;
  for (const auto& a : campaign.annotators) {
    by_id[a.rater_id] = &a;
    pool.push_back(a.rater_id);
  }
  const auto& names = campaign.config.grade_names;
  AnnotationRun run;
  for (const auto& car : campaign.railcars) {
    const std::string blind = engine.register_railcar(car.railcar_id);
    const auto assigned = engine.route(blind, pool);
    std::int64_t ts = car.start_ms + 3'600'000;
    for (const auto& rater : assigned) {
      const auto& p = *by_id.at(rater);
      const double c = annotate_sim(p, car.contamination, rng);
      const auto g = annotate_grade_sim(p, car.grade, names.size(), rng);
      engine.submit(rater, blind, c, names[g], {}, ts);
      ts += 60'000;
    }
  }
  std::map<std::string, const RailcarSim*> by_blind;
  for (const auto& car : campaign.railcars)
    by_blind[annotation::pseudonymize(car.railcar_id, engine.config().salt)] = &car;
  for (const auto& rec : engine.flagged()) {
    if (rec.flagged) ++run.flagged;
    if (rec.needs_tiebreak) ++run.tiebreaks;
    const RailcarSim& car = *by_blind.at(rec.blind_id);
    annotation::SeniorLabel label;
    label.senior_id = campaign.config.senior.rater_id;
    label.contamination = annotate_sim(campaign.config.senior, car.contamination, rng);
    label.grade = names[annotate_grade_sim(campaign.config.senior, car.grade, names.size(), rng)];
    engine.adjudicate(rec.blind_id, label);
    ++run.adjudicated;
  }
  return run;
}

DatasetSplits assemble_datasets(const Campaign& campaign,
                                const std::vector<annotation::LabeledRow>& rows,
                                const annotation::SplitAssignment& split,
                                const annotation::GradeTaxonomy& taxonomy) {
  std::map<std::string, const RailcarSim*> cars;
  for (const auto& car : campaign.railcars) cars[car.railcar_id] = &car;
  DatasetSplits out;
  for (const auto& row : rows) {
    auto it = cars.find(row.railcar_id);
    if (it == cars.end()) throw DataError("label for unknown railcar " + row.railcar_id);
    auto part = split.railcar_partition.find(row.railcar_id);
    if (part == split.railcar_partition.end()) continue;
    mil::LabeledBag lb;
    lb.bag = bag_from_railcar(*it->second);
    if (lb.bag.eligible_count() == 0) continue;
    lb.label.contamination = row.contamination;
    lb.label.grade = taxonomy.index_of(row.grade);
    switch (part->second) {
      case annotation::Partition::kTrain: out.train.push_back(std::move(lb)); break;
      case annotation::Partition::kVal: out.val.push_back(std::move(lb)); break;
      case annotation::Partition::kTest: out.test.push_back(std::move(lb)); break;
    }
  }
  return out;
}

}  // namespace scrap::sim
