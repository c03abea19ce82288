#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scrap/tensor/graph.hpp"

namespace scrap::tensor {

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Applies one update per call. Adam moment buffers live here, so one
// Optimizer must stay paired with one ParamTape for the whole run.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  const OptimizerConfig& config() const { return cfg_; }
  void step(ParamTape& tape);

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor2D> first_moment_;
  std::vector<Tensor2D> second_moment_;
};

}  // namespace scrap::tensor
