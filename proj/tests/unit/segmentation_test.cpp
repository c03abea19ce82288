#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "scrap/common/error.hpp"
#include "scrap/segmentation/geometry.hpp"
#include "scrap/segmentation/quality.hpp"
#include "scrap/segmentation/segmenter.hpp"
#include "scrap/segmentation/track_io.hpp"
#include "support/fixtures.hpp"

using namespace scrap;
using namespace scrap::segmentation;

TEST(Iou, Examples) {
  const Box a{0, 0, 10, 10};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, {20, 20, 5, 5}), 0.0);
  EXPECT_NEAR(iou(a, {5, 5, 10, 10}), 1.0 / 7.0, 1e-15);
  // touching edges share no area
  EXPECT_DOUBLE_EQ(iou(a, {10, 0, 10, 10}), 0.0);
}

TEST(Iou, DegenerateAndInvalid) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 0, 0}, {0, 0, 0, 0}), 0.0);
  EXPECT_THROW(iou({0, 0, -1, 2}, {0, 0, 1, 1}), DataError);
  EXPECT_THROW(iou({0, 0, 1, 1}, {0, 0, 1, -2}), DataError);
}

TEST(Iou, SymmetricAndBounded) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(-20, 20), ext(0, 15);
  for (int i = 0; i < 5000; ++i) {
    const Box a{pos(rng), pos(rng), ext(rng), ext(rng)};
    const Box b{pos(rng), pos(rng), ext(rng), ext(rng)};
    const double ab = iou(a, b);
    EXPECT_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    if (a.area() > 0) EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  }
}

TEST(Geometry, HalfOpenContainment) {
  const Box b{0, 0, 10, 10};
  EXPECT_TRUE(contains(b, {0, 0}));
  EXPECT_FALSE(contains(b, {10, 5}));
  EXPECT_FALSE(contains(b, {5, 10}));
  EXPECT_TRUE(contains(b, {9.999, 9.999}));
}

namespace {

DetectionTrack track_with_inside(std::size_t n, std::size_t inside) {
  DetectionTrack t;
  for (std::size_t i = 0; i < n; ++i) {
    TrackEntry e;
    e.frame = static_cast<long long>(i);
    e.timestamp = 0.04 * static_cast<double>(i);
    e.magnet = {0, 0, 4, 4};
    e.railcar = {0, 0, 10, 10};
    e.railcar_centroid = i < inside ? Point{50, 50} : Point{500, 500};
    t.entries.push_back(e);
  }
  return t;
}

const Box kRoi{0, 0, 100, 100};

}  // namespace

TEST(Roi, Examples) {
  EXPECT_TRUE(roi_conformance(track_with_inside(20, 20), kRoi).conformant);

  const auto out = roi_conformance(track_with_inside(20, 0), kRoi);
  EXPECT_FALSE(out.conformant);
  EXPECT_EQ(out.outside_frames.size(), 20u);
  EXPECT_DOUBLE_EQ(out.inside_fraction, 0.0);

  const auto r96 = roi_conformance(track_with_inside(100, 96), kRoi, 0.95);
  EXPECT_TRUE(r96.conformant);
  EXPECT_DOUBLE_EQ(r96.inside_fraction, 0.96);
  EXPECT_EQ(r96.outside_frames, (std::vector<long long>{96, 97, 98, 99}));

  EXPECT_FALSE(roi_conformance(track_with_inside(100, 94), kRoi, 0.95).conformant);
}

TEST(Roi, NonconformantTrackYieldsNoGrabs) {
  auto t = track_with_inside(30, 0);
  for (auto& e : t.entries) e.magnet = e.railcar;  // IoU 1 everywhere
  const auto res = segment_track(t, kRoi);
  EXPECT_FALSE(res.roi.conformant);
  EXPECT_TRUE(res.grabs.empty());
}

TEST(Track, ValidateRejectsDisorderAndNegativeBoxes) {
  auto t = track_with_inside(3, 3);
  EXPECT_NO_THROW(t.validate());
  t.entries[2].frame = 1;
  EXPECT_THROW(t.validate(), DataError);
  t = track_with_inside(3, 3);
  t.entries[0].railcar.w = -1;
  EXPECT_THROW(t.validate(), DataError);
}

TEST(Segment, Examples) {
  const std::vector<double> zeros(12, 0.0);
  EXPECT_TRUE(segment_grabs(zeros).empty());

  const std::vector<double> trace{0, 0, .3, .4, .3, 0, 0, .5, .2, 0};
  const auto g = segment_grabs(trace, {0.15, 0.05, 1});
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].start, 2u);
  EXPECT_EQ(g[0].end, 4u);
  EXPECT_EQ(g[0].peak, 3u);
  EXPECT_EQ(g[1].start, 7u);
  EXPECT_EQ(g[1].end, 8u);
  EXPECT_EQ(g[1].peak, 7u);

  const std::vector<double> plateau{0, .4, .4, 0};
  const auto p = segment_grabs(plateau, {0.15, 0.05, 1});
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].peak, 1u);
}

TEST(Segment, MinLenDropsShortIntervals) {
  const std::vector<double> trace{0, .5, 0, .5, .5, .5, 0};
  const auto g = segment_grabs(trace, {0.15, 0.05, 3});
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].start, 3u);
}

TEST(Segment, ValueBetweenThresholdsNeverOpens) {
  const std::vector<double> trace{0.1, 0.1, 0.1, 0.1};
  EXPECT_TRUE(segment_grabs(trace, {0.15, 0.05, 1}).empty());
}

TEST(Segment, InvalidParams) {
  const std::vector<double> trace{0.5};
  EXPECT_THROW(segment_grabs(trace, {0.05, 0.15, 1}), ConfigError);
  EXPECT_THROW(segment_grabs(trace, {0.15, -0.1, 1}), ConfigError);
  EXPECT_THROW(segment_grabs(trace, {1.5, 0.05, 1}), ConfigError);
  EXPECT_THROW(segment_grabs(std::vector<double>{}, {}), DataError);
}

namespace {

// Independent two-state automaton.
std::vector<std::pair<std::size_t, std::size_t>> hysteresis(const std::vector<double>& t, double hi,
                                                            double lo, std::size_t min_len) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  bool open = false;
  std::size_t s = 0;
  for (std::size_t i = 0; i <= t.size(); ++i) {
    const bool end = i == t.size();
    if (!open && !end && t[i] >= hi) {
      open = true;
      s = i;
    } else if (open && (end || t[i] < lo)) {
      open = false;
      if (i - s >= min_len) out.emplace_back(s, i - 1);
    }
  }
  return out;
}

std::vector<double> random_trace(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> t(n);
  double v = 0;
  for (auto& x : t) {
    v = std::clamp(v + (u(rng) - 0.5) * 0.3, 0.0, 1.0);
    x = u(rng) < 0.1 ? u(rng) * 0.3 : v;
  }
  return t;
}

}  // namespace

TEST(SegmentProperty, MatchesOracleDisjointAndPeaked) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto t = random_trace(rng, 5 + trial % 120);
    const SegmentParams p{0.3, 0.1, 1 + static_cast<std::size_t>(trial % 4)};
    const auto g = segment_grabs(t, p);
    const auto want = hysteresis(t, p.tau_hi, p.tau_lo, p.min_len);
    ASSERT_EQ(g.size(), want.size()) << "trial " << trial;
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_EQ(g[i].start, want[i].first);
      EXPECT_EQ(g[i].end, want[i].second);
      EXPECT_GE(t[g[i].peak], p.tau_hi);
      EXPECT_LE(g[i].start, g[i].peak);
      EXPECT_LE(g[i].peak, g[i].end);
      for (std::size_t k = g[i].start; k < g[i].peak; ++k) EXPECT_LT(t[k], t[g[i].peak]);
      for (std::size_t k = g[i].peak; k <= g[i].end; ++k) EXPECT_LE(t[k], t[g[i].peak]);
      if (i > 0) EXPECT_LT(g[i - 1].end, g[i].start);
    }
    EXPECT_EQ(segment_grabs(t, p), g);
  }
}

TEST(SegmentProperty, RaisingTauHiNeverAddsIntervals) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    const auto t = random_trace(rng, 80);
    std::size_t prev = SIZE_MAX;
    for (double hi = 0.11; hi <= 1.0; hi += 0.05) {
      const auto n = segment_grabs(t, {hi, 0.1, 2}).size();
      EXPECT_LE(n, prev) << "trial " << trial << " tau_hi " << hi;
      prev = n;
    }
  }
}

TEST(Quality, RuleTable) {
  EXPECT_TRUE(quality_filter({}).eligible());

  FrameQuality blurry;
  blurry.blur = 0.9;
  EXPECT_EQ(quality_filter(blurry).codes, std::vector<FailureCode>{FailureCode::kBlur});

  FrameQuality two;
  two.exposure = 0.95;
  two.blur = 0.9;
  EXPECT_EQ(quality_filter(two).codes,
            (std::vector<FailureCode>{FailureCode::kBlur, FailureCode::kOverExposed}));

  FrameQuality all;
  all.blur = 1;
  all.exposure = 0.0;
  all.aspect_ratio = 5;
  all.occluded = true;
  all.extraneous_object = true;
  all.railcar_present = false;
  all.checksum_ok = false;
  const std::vector<FailureCode> want{FailureCode::kBlur,     FailureCode::kUnderExposed,
                                      FailureCode::kOccluded, FailureCode::kExtraneousObject,
                                      FailureCode::kNoRailcar, FailureCode::kBadAspect,
                                      FailureCode::kChecksum};
  EXPECT_EQ(quality_filter(all).codes, want);
}

TEST(Quality, CodeNamesRoundTrip) {
  for (auto c : all_failure_codes()) EXPECT_EQ(failure_code_from_string(to_string(c)), c);
  EXPECT_EQ(to_string(FailureCode::kUnderExposed), "UNDEREXP");
  EXPECT_THROW(failure_code_from_string("SMUDGE"), DataError);
}

namespace {

std::vector<FrameQuality> good_frames(std::size_t n) { return std::vector<FrameQuality>(n); }

}  // namespace

TEST(Keyframes, Examples) {
  GrabInterval g{2, 6, 4, {}, true, {}};
  auto frames = good_frames(10);
  select_keyframes(g, frames, 1);
  EXPECT_EQ(g.keyframes, std::vector<std::size_t>{4});

  g = {2, 6, 4, {}, true, {}};
  frames[4].blur = 0.9;
  select_keyframes(g, frames, 1);
  EXPECT_EQ(g.keyframes, std::vector<std::size_t>{3});
  EXPECT_TRUE(g.eligible);

  g = {2, 6, 4, {}, true, {}};
  frames[3].blur = 0.9;
  select_keyframes(g, frames, 2);
  EXPECT_EQ(g.keyframes, (std::vector<std::size_t>{5, 2}));

  g = {2, 6, 4, {}, true, {}};
  for (std::size_t i = 2; i <= 6; ++i) frames[i].blur = 0.9;
  frames[6].checksum_ok = false;
  select_keyframes(g, frames, 1);
  EXPECT_TRUE(g.keyframes.empty());
  EXPECT_FALSE(g.eligible);
  EXPECT_EQ(g.failure_codes, (std::vector<FailureCode>{FailureCode::kBlur, FailureCode::kChecksum}));
}

TEST(Keyframes, StayInsideInterval) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution bad(0.4);
  for (int trial = 0; trial < 500; ++trial) {
    auto frames = good_frames(40);
    for (auto& f : frames) f.occluded = bad(rng);
    const std::size_t s = trial % 20, e = s + 1 + trial % 15, pk = (s + e) / 2;
    GrabInterval g{s, e, pk, {}, true, {}};
    select_keyframes(g, frames, 3);
    EXPECT_LE(g.keyframes.size(), 3u);
    for (auto k : g.keyframes) {
      EXPECT_GE(k, s);
      EXPECT_LE(k, e);
      EXPECT_TRUE(quality_filter(frames[k]).eligible());
    }
  }
}

TEST(TrackIo, RoundTrip) {
  auto t = track_with_inside(7, 5);
  t.entries[3].quality.blur = 0.7;
  t.entries[3].quality.occluded = true;
  t.entries[5].magnet = {1.25, 2.5, 3.75, 0.125};
  std::stringstream ss;
  write_track(ss, t);
  const auto back = read_track(ss);
  ASSERT_EQ(back.entries.size(), t.entries.size());
  for (std::size_t i = 0; i < t.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].frame, t.entries[i].frame);
    EXPECT_EQ(back.entries[i].magnet, t.entries[i].magnet);
    EXPECT_EQ(back.entries[i].railcar_centroid, t.entries[i].railcar_centroid);
    EXPECT_EQ(back.entries[i].quality.blur, t.entries[i].quality.blur);
    EXPECT_EQ(back.entries[i].quality.occluded, t.entries[i].quality.occluded);
  }
  scrap::testing::TempDir dir("track");
  save_track(t, dir / "t.jsonl");
  EXPECT_EQ(load_track(dir / "t.jsonl").entries.size(), 7u);
}

TEST(TrackIo, MalformedLineThrows) {
  std::stringstream ss("{\"frame\":1}\n");
  EXPECT_THROW(read_track(ss), DataError);
}
