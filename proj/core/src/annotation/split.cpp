#include "scrap/annotation/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "scrap/common/error.hpp"

namespace scrap::annotation {

std::string to_string(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kVal: return "val";
    case Partition::kTest: return "test";
  }
  return "train";
}

Partition partition_from_string(const std::string& s) {
  if (s == "train") return Partition::kTrain;
  if (s == "val") return Partition::kVal;
  if (s == "test") return Partition::kTest;
  throw DataError("unknown partition '" + s + "'");
}

std::vector<std::string> SplitAssignment::members(Partition p) const {
  std::vector<std::string> out;
  for (const auto& [id, part] : railcar_partition) {
    if (part == p) out.push_back(id);
  }
  return out;
}

std::array<double, 3> reference_split_ratios() {
  const double total =
      std::accumulate(kReferenceSplitCounts.begin(), kReferenceSplitCounts.end(), 0.0);
  return {kReferenceSplitCounts[0] / total, kReferenceSplitCounts[1] / total,
          kReferenceSplitCounts[2] / total};
}

SplitAssignment split_by_railcar(std::vector<std::string> railcars,
                                 const std::array<double, 3>& ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("split: ratios must be nonnegative");
  }
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");
  std::sort(railcars.begin(), railcars.end());
  railcars.erase(std::unique(railcars.begin(), railcars.end()), railcars.end());
  if (railcars.size() < ratios.size()) {
    throw DataError("split: " + std::to_string(railcars.size()) +
                    " railcars cannot fill three partitions");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(railcars.begin(), railcars.end(), rng);

  const double n = static_cast<double>(railcars.size());
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] * n;
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < railcars.size(); ++k, ++assigned) ++sizes[order[k % 3]];

  SplitAssignment out;
  out.counts = sizes;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t i = 0; i < sizes[p]; ++i) {
      out.railcar_partition[railcars[pos++]] = static_cast<Partition>(p);
    }
    if (sizes[p] == 0) {
      out.warnings.push_back("partition " + to_string(static_cast<Partition>(p)) + " is empty");
    }
  }
  return out;
}

}  // namespace scrap::annotation
