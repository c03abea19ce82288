#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace scrap::annotation {

enum class Partition { kTrain, kVal, kTest };

std::string to_string(Partition p);
Partition partition_from_string(const std::string& s);

struct SplitAssignment {
  std::map<std::string, Partition> railcar_partition;
  std::array<std::size_t, 3> counts{};
  std::vector<std::string> warnings;  // e.g. empty partitions

  std::vector<std::string> members(Partition p) const;  // sorted
};

/// Ratios of the production dataset split (train/val/test railcars).
inline constexpr std::array<double, 3> kReferenceSplitCounts{1504.0, 305.0, 223.0};
std::array<double, 3> reference_split_ratios();

/// Seeded shuffle of the (sorted, de-duplicated) railcar ids, then a
/// largest-remainder cut, so every partition is within one railcar of its
/// exact share. Splitting by railcar keeps all layers of a car together.
SplitAssignment split_by_railcar(std::vector<std::string> railcars,
                                 const std::array<double, 3>& ratios, std::uint64_t seed);

}  // namespace scrap::annotation
