#include "scrap/metrics/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace scrap::metrics {
namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DataError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                    std::to_string(b) + ")");
  }
  if (a == 0) throw DataError(std::string(what) + ": empty input");
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred.size(), truth.size(), "mae");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred[i] - truth[i]);
  return total / static_cast<double>(pred.size());
}

double r2(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred.size(), truth.size(), "r2");
  if (truth.size() < 2) throw DataError("r2: need at least two pairs");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  }
  if (ss_tot == 0.0) throw UndefinedR2();
  return 1.0 - ss_res / ss_tot;
}

ClassificationMetrics classification_metrics(std::span<const std::size_t> pred,
                                             std::span<const std::size_t> truth,
                                             std::size_t class_num) {
  check_lengths(pred.size(), truth.size(), "classification_metrics");
  if (class_num == 0) throw DataError("classification_metrics: class_num must be positive");
  ClassificationMetrics m;
  m.confusion.assign(class_num, std::vector<std::size_t>(class_num, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= class_num || truth[i] >= class_num) {
      throw DataError("classification_metrics: label out of range");
    }
    ++m.confusion[truth[i]][pred[i]];
    if (pred[i] == truth[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  m.per_class.resize(class_num);
  for (std::size_t c = 0; c < class_num; ++c) {
    ClassStats& s = m.per_class[c];
    const std::size_t tp = m.confusion[c][c];
    for (std::size_t j = 0; j < class_num; ++j) {
      s.support += m.confusion[c][j];
      s.predicted += m.confusion[j][c];
    }
    s.precision = s.predicted ? static_cast<double>(tp) / static_cast<double>(s.predicted) : 0.0;
    s.recall = s.support ? static_cast<double>(tp) / static_cast<double>(s.support) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    if (s.support == 0) {
      m.warnings.push_back("class " + std::to_string(c) +
                           " absent from truth; contributes 0 to macro averages");
    }
    m.macro_precision += s.precision;
    m.macro_recall += s.recall;
    m.macro_f1 += s.f1;
  }
  const double k = static_cast<double>(class_num);
  m.macro_precision /= k;
  m.macro_recall /= k;
  m.macro_f1 /= k;
  return m;
}

SpreadReport inspector_spread(const std::map<std::string, std::vector<RaterLabel>>& by_railcar) {
  std::map<std::string, std::vector<double>> diffs;
  std::map<std::string, bool> seen;
  for (const auto& [railcar, labels] : by_railcar) {
    for (const auto& l : labels) seen[l.rater] = true;
    if (labels.size() < 2) continue;
    double consensus = 0.0;
    for (const auto& l : labels) consensus += l.value;
    consensus /= static_cast<double>(labels.size());
    for (const auto& l : labels) diffs[l.rater].push_back(l.value - consensus);
  }
  SpreadReport report;
  for (const auto& [rater, _] : seen) {
    auto it = diffs.find(rater);
    if (it == diffs.end()) {
      report.warnings.push_back("rater " + rater + " has no shared railcars; excluded");
      continue;
    }
    const auto& d = it->second;
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(d.size());
    double var = 0.0;
    for (double x : d) var += (x - mean) * (x - mean);
    var /= static_cast<double>(d.size());
    report.raters.push_back(RaterSpread{rater, mean, std::sqrt(var), d.size()});
  }
  if (report.raters.size() < 2 && !by_railcar.empty()) {
    report.warnings.push_back("fewer than two raters share a railcar");
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = {
      {"mae", mae},
      {"r2", r2 ? nlohmann::json(*r2) : nlohmann::json(nullptr)},
      {"n", n},
      {"model_version", model_version},
      {"split", split},
      {"averaging", averaging},
      {"warnings", warnings},
  };
  if (!r2) j["r2_error"] = "UNDEFINED_R2";
  if (classification) {
    const auto& c = *classification;
    j["accuracy"] = c.accuracy;
    j["macro_precision"] = c.macro_precision;
    j["macro_recall"] = c.macro_recall;
    j["macro_f1"] = c.macro_f1;
    j["confusion"] = c.confusion;
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t k = 0; k < c.per_class.size(); ++k) {
      const auto& s = c.per_class[k];
      per.push_back({{"class", k < class_names.size() ? class_names[k] : std::to_string(k)},
                     {"precision", s.precision},
                     {"recall", s.recall},
                     {"f1", s.f1},
                     {"support", s.support}});
    }
    j["per_class"] = per;
  }
  return j;
}

std::string EvalReport::csv_header() {
  return "model_version,split,n,mae,r2,accuracy,macro_precision,macro_recall,macro_f1";
}

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os << std::setprecision(6) << model_version << ',' << split << ',' << n << ',' << mae << ',';
  if (r2) os << *r2;
  os << ',';
  if (classification) {
    os << classification->accuracy << ',' << classification->macro_precision << ','
       << classification->macro_recall << ',' << classification->macro_f1;
  } else {
    os << ",,,";
  }
  return os.str();
}

EvalReport evaluate(std::span<const double> pred_reg, std::span<const double> truth_reg,
                    std::span<const std::size_t> pred_cls, std::span<const std::size_t> truth_cls,
                    std::vector<std::string> class_names, std::string model_version,
                    std::string split) {
  EvalReport r;
  r.mae = mae(pred_reg, truth_reg);
  r.n = pred_reg.size();
  try {
    r.r2 = metrics::r2(pred_reg, truth_reg);
  } catch (const UndefinedR2& e) {
    r.warnings.push_back(e.what());
  }
  if (!truth_cls.empty()) {
    r.classification = classification_metrics(pred_cls, truth_cls, class_names.size());
    for (const auto& w : r.classification->warnings) r.warnings.push_back(w);
  }
  r.class_names = std::move(class_names);
  r.model_version = std::move(model_version);
  r.split = std::move(split);
  return r;
}

}  // namespace scrap::metrics
