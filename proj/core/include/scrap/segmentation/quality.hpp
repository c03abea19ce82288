#pragma once

#include <string>
#include <vector>

namespace scrap::segmentation {

// Fixed rejection vocabulary shared by the annotation UI and the
// production segmenter. Declaration order is the reporting order.
enum class FailureCode {
  kBlur,
  kUnderExposed,
  kOverExposed,
  kOccluded,
  kExtraneousObject,
  kNoRailcar,
  kBadAspect,
  kChecksum,
};

std::string to_string(FailureCode code);
FailureCode failure_code_from_string(const std::string& s);
const std::vector<FailureCode>& all_failure_codes();

struct FrameQuality {
  double blur = 0.0;         // 0 sharp .. 1 unusable
  double exposure = 0.5;     // mean normalized luminance
  double aspect_ratio = 1.6; // frame width / height
  bool occluded = false;     // dust or smoke over the railcar
  bool extraneous_object = false;
  bool railcar_present = true;
  bool checksum_ok = true;
};

struct QualityThresholds {
  double blur_max = 0.6;
  double exposure_min = 0.15;
  double exposure_max = 0.85;
  double aspect_min = 1.2;
  double aspect_max = 2.0;
};

struct QualityVerdict {
  std::vector<FailureCode> codes;  // empty ⇔ eligible
  bool eligible() const { return codes.empty(); }
};

/// Applies every rule and returns all triggered codes in enum order.
QualityVerdict quality_filter(const FrameQuality& fq, const QualityThresholds& t = {});

}  // namespace scrap::segmentation
