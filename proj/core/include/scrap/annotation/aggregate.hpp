#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scrap::annotation {

inline constexpr double kDefaultFlagThreshold = 0.4;
inline constexpr std::size_t kMinRaters = 3;

// Scrap grade vocabulary. The default holds the three ferrous grades and
// cast iron; deployments may extend it.
class GradeTaxonomy {
 public:
  GradeTaxonomy();
  explicit GradeTaxonomy(std::vector<std::string> labels);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  bool contains(std::string_view label) const;
  /// Throws DataError for an unknown label.
  std::size_t index_of(std::string_view label) const;

 private:
  std::vector<std::string> labels_;
};

/// HMAC-SHA-256(salt, id) truncated to 128 bits, hex, prefixed "bl-".
std::string pseudonymize(std::string_view railcar_id, std::string_view salt);

/// k distinct raters drawn uniformly from the pool.
std::vector<std::string> route(std::span<const std::string> pool, std::size_t k,
                               std::mt19937_64& rng);

struct ContinuousAggregate {
  double mean = 0.0;
  double std = 0.0;  // population (÷n)
  bool flagged = false;
};

/// Mean, population STD and flag (STD strictly above the threshold).
ContinuousAggregate aggregate_continuous(std::span<const double> labels,
                                         double flag_threshold = kDefaultFlagThreshold);

struct CategoricalAggregate {
  std::optional<std::string> grade;  // set iff a strict majority exists
  std::map<std::string, std::size_t> votes;

  bool needs_tiebreak() const { return !grade.has_value(); }
};

CategoricalAggregate aggregate_categorical(std::span<const std::string> labels,
                                           const GradeTaxonomy& taxonomy = {});

}  // namespace scrap::annotation
