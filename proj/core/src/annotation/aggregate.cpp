#include "scrap/annotation/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "scrap/common/digest.hpp"
#include "scrap/common/error.hpp"

namespace scrap::annotation {

GradeTaxonomy::GradeTaxonomy() : labels_{"3A", "3A1", "3AH", "CAST_IRON"} {}

GradeTaxonomy::GradeTaxonomy(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw ConfigError("grade taxonomy must not be empty");
  std::set<std::string> uniq(labels_.begin(), labels_.end());
  if (uniq.size() != labels_.size()) throw ConfigError("grade taxonomy has duplicate labels");
}

bool GradeTaxonomy::contains(std::string_view label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

std::size_t GradeTaxonomy::index_of(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw DataError("unknown grade label '" + std::string(label) + "'");
  return static_cast<std::size_t>(it - labels_.begin());
}

std::string pseudonymize(std::string_view railcar_id, std::string_view salt) {
  if (salt.empty()) throw ConfigError("pseudonymize: empty salt");
  if (railcar_id.empty()) throw DataError("pseudonymize: empty railcar id");
  return "bl-" + hmac_sha256_hex(salt, railcar_id).substr(0, 32);
}

std::vector<std::string> route(std::span<const std::string> pool, std::size_t k,
                               std::mt19937_64& rng) {
  std::set<std::string> uniq(pool.begin(), pool.end());
  if (uniq.size() != pool.size()) throw ConfigError("route: rater pool contains duplicates");
  if (pool.size() < k) {
    throw ConfigError("route: pool of " + std::to_string(pool.size()) + " raters cannot supply " +
                      std::to_string(k) + " independent annotators");
  }
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.push_back(pool[idx[i]]);
  }
  return out;
}

ContinuousAggregate aggregate_continuous(std::span<const double> labels, double flag_threshold) {
  if (labels.size() < kMinRaters) {
    throw DataError("aggregate_continuous: need at least " + std::to_string(kMinRaters) +
                    " labels, got " + std::to_string(labels.size()));
  }
  for (double l : labels) {
    if (!(l >= 0.0 && l <= 100.0)) throw DataError("aggregate_continuous: label outside [0, 100]");
  }
  const double n = static_cast<double>(labels.size());
  ContinuousAggregate a;
  a.mean = std::accumulate(labels.begin(), labels.end(), 0.0) / n;
  double ss = 0.0;
  for (double l : labels) ss += (l - a.mean) * (l - a.mean);
  a.std = std::sqrt(ss / n);
  a.flagged = a.std > flag_threshold;
  return a;
}

CategoricalAggregate aggregate_categorical(std::span<const std::string> labels,
                                           const GradeTaxonomy& taxonomy) {
  if (labels.size() < kMinRaters) {
    throw DataError("aggregate_categorical: need at least " + std::to_string(kMinRaters) +
                    " labels");
  }
  CategoricalAggregate a;
  for (const auto& l : labels) {
    if (!taxonomy.contains(l)) throw DataError("aggregate_categorical: unknown grade '" + l + "'");
    ++a.votes[l];
  }
  for (const auto& [grade, count] : a.votes) {
    if (2 * count > labels.size()) a.grade = grade;
  }
  return a;
}

}  // namespace scrap::annotation
