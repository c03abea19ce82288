#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "scrap/common/error.hpp"

namespace scrap::metrics {

// Thrown by r2 when the truth vector has zero variance.
class UndefinedR2 : public Error {
 public:
  UndefinedR2() : Error("UNDEFINED_R2: truth values are constant") {}
};

double mae(std::span<const double> pred, std::span<const double> truth);
double r2(std::span<const double> pred, std::span<const double> truth);

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;     // truth count
  std::size_t predicted = 0;   // prediction count
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassStats> per_class;
  // confusion[truth][prediction]
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<std::string> warnings;
};

/// Macro averages run over all class_num classes; a class with no truth
/// support contributes 0 and adds a warning.
ClassificationMetrics classification_metrics(std::span<const std::size_t> pred,
                                             std::span<const std::size_t> truth,
                                             std::size_t class_num);

struct RaterLabel {
  std::string rater;
  double value = 0.0;
};

struct RaterSpread {
  std::string rater;
  double bias = 0.0;    // mean(rater - consensus)
  double spread = 0.0;  // population std of (rater - consensus)
  std::size_t railcars = 0;
};

struct SpreadReport {
  std::vector<RaterSpread> raters;  // sorted by rater id
  std::vector<std::string> warnings;
};

/// Per-rater offset and width relative to the per-railcar mean of all
/// raters. Railcars seen by a single rater carry no comparison and are
/// skipped.
SpreadReport inspector_spread(const std::map<std::string, std::vector<RaterLabel>>& by_railcar);

struct EvalReport {
  double mae = 0.0;
  std::optional<double> r2;
  std::optional<ClassificationMetrics> classification;
  std::vector<std::string> class_names;
  std::size_t n = 0;
  std::string model_version;
  std::string split;
  std::string averaging = "macro";
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

EvalReport evaluate(std::span<const double> pred_reg, std::span<const double> truth_reg,
                    std::span<const std::size_t> pred_cls, std::span<const std::size_t> truth_cls,
                    std::vector<std::string> class_names, std::string model_version,
                    std::string split);

}  // namespace scrap::metrics
