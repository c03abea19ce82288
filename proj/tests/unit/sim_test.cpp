#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "scrap/common/error.hpp"
#include "scrap/segmentation/segmenter.hpp"
#include "scrap/sim/campaign.hpp"
#include "scrap/sim/campaign_io.hpp"
#include "support/fixtures.hpp"

using namespace scrap;
using namespace scrap::sim;
namespace fs = std::filesystem;

namespace {

CampaignConfig small(std::uint64_t seed = 5) {
  CampaignConfig cfg;
  cfg.split_counts = {20, 5, 5};
  cfg.seed = seed;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Campaign, SameSeedSameBytes) {
  scrap::testing::TempDir a("camp-a"), b("camp-b");
  write_campaign(gen_campaign(small()), a.path());
  write_campaign(gen_campaign(small()), b.path());
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path());
    EXPECT_EQ(slurp(e.path()), slurp(b.path() / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 30u);

  const auto other = gen_campaign(small(6));
  EXPECT_NE(other.railcars[0].contamination, gen_campaign(small()).railcars[0].contamination);
}

TEST(Campaign, NoiselessFeaturesAreLinearImages) {
  auto cfg = small();
  cfg.feature_sigma = 0.0;
  const auto c = gen_campaign(cfg);
  const std::size_t grades = cfg.grade_names.size();
  for (const auto& car : c.railcars) {
    for (const auto& layer : car.layers) {
      std::vector<double> x(1 + grades, 0.0);
      x[0] = layer.contamination;
      x[1 + car.grade] = cfg.grade_effect;
      for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
        double v = 0;
        for (std::size_t k = 0; k < x.size(); ++k) v += c.mixing(d, k) * x[k];
        EXPECT_NEAR(layer.features[d], v, 1e-12);
      }
    }
  }
}

TEST(Campaign, ContaminationMeanMatchesPrior) {
  CampaignConfig cfg;
  cfg.split_counts = {200, 50, 50};
  const auto c = gen_campaign(cfg);
  double s = 0;
  for (const auto& car : c.railcars) s += car.contamination;
  const double mean = s / 300.0;
  const double sd = (cfg.contamination_max - cfg.contamination_min) / std::sqrt(12.0);
  EXPECT_NEAR(mean, 2.5, 3 * sd / std::sqrt(300.0));
}

TEST(Campaign, RailcarLabelIsLayerMean) {
  auto cfg = small();
  cfg.layer_spread = 0.4;
  cfg.hot_layers = 2;
  const auto c = gen_campaign(cfg);
  for (const auto& car : c.railcars) {
    double s = 0;
    std::size_t hot = 0;
    for (const auto& l : car.layers) {
      s += l.contamination;
      hot += l.hot;
    }
    EXPECT_NEAR(car.contamination, s / double(car.layers.size()), 1e-12);
    EXPECT_EQ(hot, 2u);
    EXPECT_GE(car.layers.size(), cfg.layers_min);
    EXPECT_LE(car.layers.size(), cfg.layers_max);
  }
}

TEST(Campaign, InvalidConfig) {
  auto cfg = small();
  cfg.layers_min = 0;
  EXPECT_THROW(gen_campaign(cfg), ConfigError);
  cfg = small();
  cfg.grade_prior = {1.0};
  EXPECT_THROW(gen_campaign(cfg), ConfigError);
  cfg = small();
  cfg.split_counts = {0, 0, 0};
  EXPECT_THROW(gen_campaign(cfg), ConfigError);
}

TEST(Campaign, BagsFollowTheSegmenter) {
  const auto c = gen_campaign(small());
  for (const auto& car : c.railcars) {
    const auto bag = bag_from_railcar(car);
    EXPECT_EQ(bag.railcar_id, car.railcar_id);
    ASSERT_EQ(bag.instances.size(), car.layers.size());
    for (std::size_t i = 0; i < bag.instances.size(); ++i)
      EXPECT_EQ(bag.instances[i].features, car.layers[i].features);
  }
}

TEST(IouTrace, ZeroGrabsIsFlatNoise) {
  std::mt19937_64 rng(1);
  const auto t = gen_iou_trace(0, 15, 0.02, rng);
  for (double v : t.values) EXPECT_LT(v, segmentation::SegmentParams{}.tau_lo);
  EXPECT_TRUE(segmentation::segment_grabs(t.values).empty());
}

TEST(IouTrace, RoundTripThroughSegmenter) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t n = 1; n <= 20; ++n) {
      const auto t = gen_iou_trace(n, 15, 0.02, rng);
      const auto g = segmentation::segment_grabs(t.values);
      ASSERT_EQ(g.size(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_LE(std::abs(double(g[i].peak) - double(t.peaks[i])), 1.0);
    }
  }
}

TEST(AnnotateSim, Examples) {
  std::mt19937_64 rng(3);
  EXPECT_DOUBLE_EQ(annotate_sim({"x", 0, 1, 0, 0}, 2.7, rng), 2.7);
  EXPECT_DOUBLE_EQ(annotate_sim({"x", 2, 1, 0, 0}, 1.0, rng), 3.0);
  EXPECT_DOUBLE_EQ(annotate_sim({"x", -5, 1, 0, 0}, 1.0, rng), 0.0);
}

TEST(AnnotateSim, NoiseWidthMonteCarlo) {
  std::mt19937_64 rng(4);
  const AnnotatorProfile p{"x", 0, 1, 0.5, 0};
  constexpr int n = 10000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = annotate_sim(p, 50.0, rng);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(sd, 0.5, 0.05 * 0.5);
}

TEST(NoiseFloor, Examples) {
  CampaignConfig cfg;
  const std::vector<AnnotatorProfile> exact{{"a", 0, 1, 0, 0}, {"b", 0, 1, 0, 0}, {"c", 0, 1, 0, 0}};
  EXPECT_DOUBLE_EQ(noise_floor(cfg, exact), 0.0);

  // σ_c = 0.3/√3, E|N(0, σ_c)| = σ_c·√(2/π)
  const double want = 0.3 / std::sqrt(3.0) * std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(noise_floor(cfg, default_annotators()), want, 1e-12);
  EXPECT_NEAR(want, 0.1382, 5e-5);

  const std::vector<AnnotatorProfile> biased{{"a", 1, 1, 0.3, 0}, {"b", 1, 1, 0.3, 0}, {"c", 1, 1, 0.3, 0}};
  EXPECT_GE(noise_floor(cfg, biased), 1.0);

  // pool larger than the panel takes the Monte-Carlo path
  auto pool = default_annotators();
  pool.push_back({"d", 0, 1, 0.3, 0});
  EXPECT_NEAR(noise_floor(cfg, pool), want, 0.01);
}

TEST(Consensus, UnbiasedWithZeroBiasRaters) {
  // truths kept away from 0 so the [0,100] clamp adds no bias of its own
  const auto raters = default_annotators();
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> prior(1.0, 5.0);
  constexpr int n = 10000;
  double s = 0;
  for (int i = 0; i < n; ++i) {
    const double truth = prior(rng);
    double c = 0;
    for (const auto& r : raters) c += annotate_sim(r, truth, rng);
    s += c / 3.0 - truth;
  }
  const double sigma_c = 0.3 / std::sqrt(3.0);
  EXPECT_NEAR(s / n, 0.0, 3 * sigma_c / std::sqrt(double(n)));
}

TEST(CampaignIo, RoundTrip) {
  const auto c = gen_campaign(small());
  scrap::testing::TempDir dir("camp-io");
  write_campaign(c, dir.path());
  const auto back = load_campaign(dir.path());
  EXPECT_EQ(back.config.digest(), c.config.digest());
  EXPECT_EQ(back.noise_floor, c.noise_floor);
  ASSERT_EQ(back.railcars.size(), c.railcars.size());
  for (std::size_t i = 0; i < c.railcars.size(); ++i) {
    const auto& a = c.railcars[i];
    const auto& b = back.railcars[i];
    EXPECT_EQ(a.railcar_id, b.railcar_id);
    EXPECT_EQ(a.line, b.line);
    EXPECT_EQ(a.grade, b.grade);
    EXPECT_EQ(a.contamination, b.contamination);
    EXPECT_EQ(a.peak_positions, b.peak_positions);
    ASSERT_EQ(a.layers.size(), b.layers.size());
    for (std::size_t j = 0; j < a.layers.size(); ++j) EXPECT_EQ(a.layers[j].features, b.layers[j].features);
    EXPECT_EQ(a.track.entries.size(), b.track.entries.size());
  }
}

TEST(CampaignIo, TamperedManifestRejected) {
  scrap::testing::TempDir dir("camp-tamper");
  write_campaign(gen_campaign(small()), dir.path());
  auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  manifest["config"]["seed"] = 999;
  std::ofstream(dir / "manifest.json") << manifest.dump(2);
  EXPECT_THROW(load_campaign(dir.path()), IntegrityError);
  EXPECT_THROW(load_campaign(dir / "missing"), DataError);
}

TEST(SimulateAnnotation, EveryRailcarGetsAFinalLabel) {
  const auto p = scrap::testing::prepare(small());
  EXPECT_EQ(p.rows.size(), p.campaign.railcars.size());
  EXPECT_EQ(p.data.train.size() + p.data.val.size() + p.data.test.size(), p.rows.size());
  for (const auto& r : p.rows) {
    EXPECT_FALSE(r.grade.empty());
    EXPECT_TRUE(r.provenance == "consensus" || r.provenance == "adjudicated");
  }
}
