#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scrap/segmentation/geometry.hpp"
#include "scrap/segmentation/quality.hpp"

namespace scrap::segmentation {

struct TrackEntry {
  long long frame = 0;
  double timestamp = 0.0;
  Box magnet;
  Box railcar;
  Point railcar_centroid;
  FrameQuality quality;
};

// Per-frame detector/tracker output for one unloading.
struct DetectionTrack {
  std::vector<TrackEntry> entries;

  /// Frame indices strictly increasing, boxes with non-negative extent.
  void validate() const;
  /// IoU(magnet, railcar) per entry.
  std::vector<double> iou_trace() const;
  std::vector<FrameQuality> qualities() const;
};

struct RoiConformance {
  bool conformant = false;
  double inside_fraction = 0.0;
  std::vector<long long> outside_frames;  // frame indices with centroid outside
};

/// Conformant iff the railcar centroid sits inside the ROI for at least
/// `min_fraction` of frames.
RoiConformance roi_conformance(const DetectionTrack& track, const Box& roi,
                               double min_fraction = 0.95);

struct SegmentParams {
  double tau_hi = 0.15;
  double tau_lo = 0.05;
  std::size_t min_len = 3;

  void validate() const;
};

// Positions are indices into the IoU trace, not raw frame numbers.
struct GrabInterval {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::size_t peak = 0;
  std::vector<std::size_t> keyframes;
  bool eligible = true;
  std::vector<FailureCode> failure_codes;

  std::size_t length() const { return end - start + 1; }
  friend bool operator==(const GrabInterval&, const GrabInterval&) = default;
};

/// Hysteresis segmentation: an interval opens at the first sample ≥ τ_hi
/// and closes before the first sample < τ_lo. Intervals shorter than
/// min_len are dropped; the peak is the earliest argmax.
std::vector<GrabInterval> segment_grabs(std::span<const double> iou_trace,
                                        const SegmentParams& params = {});

/// Fills interval.keyframes with up to k quality-passing positions,
/// scanning outward from the peak (peak, peak-1, peak+1, ...). When none
/// pass, the interval becomes ineligible and carries the union of codes.
void select_keyframes(GrabInterval& interval, std::span<const FrameQuality> frames, std::size_t k,
                      const QualityThresholds& thresholds = {});

struct SegmentationResult {
  RoiConformance roi;
  std::vector<GrabInterval> grabs;
};

/// ROI check, IoU trace, segmentation and keyframe selection in one pass.
/// A nonconformant track yields no grabs.
SegmentationResult segment_track(const DetectionTrack& track, const Box& roi,
                                 const SegmentParams& params = {}, std::size_t keyframes = 1,
                                 const QualityThresholds& thresholds = {},
                                 double roi_fraction = 0.95);

}  // namespace scrap::segmentation
