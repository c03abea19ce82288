#include "scrap/segmentation/segmenter.hpp"

#include <algorithm>
#include <cmath>

#include "scrap/common/error.hpp"

namespace scrap::segmentation {

void DetectionTrack::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (i > 0 && e.frame <= entries[i - 1].frame) {
      throw DataError("track: frame indices must be strictly increasing (frame " +
                      std::to_string(e.frame) + ")");
    }
    if (e.magnet.w < 0 || e.magnet.h < 0 || e.railcar.w < 0 || e.railcar.h < 0) {
      throw DataError("track: negative box extent at frame " + std::to_string(e.frame));
    }
  }
}

std::vector<double> DetectionTrack::iou_trace() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(iou(e.magnet, e.railcar));
  return out;
}

std::vector<FrameQuality> DetectionTrack::qualities() const {
  std::vector<FrameQuality> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.quality);
  return out;
}

RoiConformance roi_conformance(const DetectionTrack& track, const Box& roi, double min_fraction) {
  RoiConformance r;
  if (track.entries.empty()) return r;
  std::size_t inside = 0;
  for (const auto& e : track.entries) {
    if (contains(roi, e.railcar_centroid)) {
      ++inside;
    } else {
      r.outside_frames.push_back(e.frame);
    }
  }
  r.inside_fraction = static_cast<double>(inside) / static_cast<double>(track.entries.size());
  r.conformant = r.inside_fraction >= min_fraction;
  return r;
}

void SegmentParams::validate() const {
  if (!(tau_lo >= 0.0 && tau_lo < tau_hi && tau_hi <= 1.0)) {
    throw ConfigError("segment_grabs: thresholds must satisfy 0 <= tau_lo < tau_hi <= 1");
  }
}

std::vector<GrabInterval> segment_grabs(std::span<const double> trace,
                                        const SegmentParams& params) {
  params.validate();
  if (trace.empty()) throw DataError("segment_grabs: empty trace");
  std::vector<GrabInterval> out;
  bool open = false;
  GrabInterval cur;
  auto close = [&](std::size_t end) {
    cur.end = end;
    if (cur.length() >= params.min_len) out.push_back(cur);
    open = false;
  };
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double v = trace[i];
    if (!std::isfinite(v)) throw DataError("segment_grabs: non-finite IoU sample");
    if (!open) {
      if (v >= params.tau_hi) {
        open = true;
        cur = GrabInterval{};
        cur.start = i;
        cur.peak = i;
      }
    } else if (v < params.tau_lo) {
      close(i - 1);
    } else if (v > trace[cur.peak]) {
      cur.peak = i;
    }
  }
  if (open) close(trace.size() - 1);
  return out;
}

void select_keyframes(GrabInterval& interval, std::span<const FrameQuality> frames, std::size_t k,
                      const QualityThresholds& thresholds) {
  if (interval.end >= frames.size() || interval.start > interval.peak ||
      interval.peak > interval.end) {
    throw DataError("select_keyframes: interval outside the frame range");
  }
  interval.keyframes.clear();
  interval.failure_codes.clear();
  std::vector<bool> seen(all_failure_codes().size(), false);

  auto consider = [&](std::size_t pos) {
    const QualityVerdict verdict = quality_filter(frames[pos], thresholds);
    if (verdict.eligible()) {
      interval.keyframes.push_back(pos);
    } else {
      for (FailureCode c : verdict.codes) seen[static_cast<std::size_t>(c)] = true;
    }
  };

  const std::size_t reach = std::max(interval.peak - interval.start, interval.end - interval.peak);
  for (std::size_t d = 0; d <= reach && interval.keyframes.size() < k; ++d) {
    if (d == 0) {
      consider(interval.peak);
      continue;
    }
    if (interval.peak >= interval.start + d) consider(interval.peak - d);
    if (interval.keyframes.size() >= k) break;
    if (interval.peak + d <= interval.end) consider(interval.peak + d);
  }
  interval.eligible = !interval.keyframes.empty();
  if (!interval.eligible) {
    for (std::size_t c = 0; c < seen.size(); ++c) {
      if (seen[c]) interval.failure_codes.push_back(all_failure_codes()[c]);
    }
  }
}

SegmentationResult segment_track(const DetectionTrack& track, const Box& roi,
                                 const SegmentParams& params, std::size_t keyframes,
                                 const QualityThresholds& thresholds, double roi_fraction) {
  track.validate();
  SegmentationResult r;
  if (track.entries.empty()) throw DataError("segment_track: empty track");
  r.roi = roi_conformance(track, roi, roi_fraction);
  if (!r.roi.conformant) return r;
  const auto trace = track.iou_trace();
  const auto quality = track.qualities();
  r.grabs = segment_grabs(trace, params);
  for (auto& g : r.grabs) select_keyframes(g, quality, keyframes, thresholds);
  return r;
}

}  // namespace scrap::segmentation
