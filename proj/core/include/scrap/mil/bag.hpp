#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace scrap::mil {

// One magnet grab: the keyframe's feature vector plus the quality failure
// codes raised for it. An instance with any failure code is ineligible.
struct Instance {
  std::size_t layer_index = 0;
  std::vector<double> features;
  std::vector<std::string> quality_flags;

  bool eligible() const { return quality_flags.empty(); }
};

// All layers of one railcar, ordered by layer index.
struct Bag {
  std::string railcar_id;
  std::vector<Instance> instances;

  std::size_t feature_dim() const;
  /// Feature vectors of the eligible instances, in layer order.
  std::vector<std::vector<double>> eligible_features() const;
  std::size_t eligible_count() const;
  /// Throws DataError when the bag breaks an invariant (no eligible
  /// instance, ragged dimensions, unordered layers).
  void validate() const;
};

struct BagLabel {
  double contamination = 0.0;           // percent, [0, 100]
  std::optional<std::size_t> grade;     // index into the model's class names

  void validate(std::size_t class_num) const;
};

struct LabeledBag {
  Bag bag;
  BagLabel label;
};

using Dataset = std::vector<LabeledBag>;

}  // namespace scrap::mil
