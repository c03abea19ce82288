#include "scrap/segmentation/quality.hpp"

#include <array>
#include <cmath>

#include "scrap/common/error.hpp"

namespace scrap::segmentation {
namespace {

constexpr std::array<std::pair<FailureCode, const char*>, 8> kNames{{
    {FailureCode::kBlur, "BLUR"},
    {FailureCode::kUnderExposed, "UNDEREXP"},
    {FailureCode::kOverExposed, "OVEREXP"},
    {FailureCode::kOccluded, "OCCLUDED"},
    {FailureCode::kExtraneousObject, "EXTRANEOUS_OBJECT"},
    {FailureCode::kNoRailcar, "NO_RAILCAR"},
    {FailureCode::kBadAspect, "BAD_ASPECT"},
    {FailureCode::kChecksum, "CHECKSUM"},
}};

}  // namespace

std::string to_string(FailureCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "UNKNOWN";
}

FailureCode failure_code_from_string(const std::string& s) {
  for (const auto& [c, name] : kNames) {
    if (s == name) return c;
  }
  throw DataError("unknown failure code '" + s + "'");
}

const std::vector<FailureCode>& all_failure_codes() {
  static const std::vector<FailureCode> codes = [] {
    std::vector<FailureCode> v;
    for (const auto& [c, _] : kNames) v.push_back(c);
    return v;
  }();
  return codes;
}

QualityVerdict quality_filter(const FrameQuality& fq, const QualityThresholds& t) {
  if (!std::isfinite(fq.blur) || !std::isfinite(fq.exposure) || !std::isfinite(fq.aspect_ratio)) {
    throw DataError("quality_filter: non-finite quality score");
  }
  QualityVerdict v;
  if (fq.blur > t.blur_max) v.codes.push_back(FailureCode::kBlur);
  if (fq.exposure < t.exposure_min) v.codes.push_back(FailureCode::kUnderExposed);
  if (fq.exposure > t.exposure_max) v.codes.push_back(FailureCode::kOverExposed);
  if (fq.occluded) v.codes.push_back(FailureCode::kOccluded);
  if (fq.extraneous_object) v.codes.push_back(FailureCode::kExtraneousObject);
  if (!fq.railcar_present) v.codes.push_back(FailureCode::kNoRailcar);
  if (fq.aspect_ratio < t.aspect_min || fq.aspect_ratio > t.aspect_max) {
    v.codes.push_back(FailureCode::kBadAspect);
  }
  if (!fq.checksum_ok) v.codes.push_back(FailureCode::kChecksum);
  return v;
}

}  // namespace scrap::segmentation
