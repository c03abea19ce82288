#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scrap/tensor/graph.hpp"

namespace scrap::tensor {

struct GradCheckOptions {
  double step = 1e-5;  // central-difference half width, near cbrt(eps) for O(1) losses
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  // Coordinates with gradients far below the loss's round-off level would
  // otherwise report noise as error.
  double abs_floor = 1e-4;
  std::size_t max_coordinates = 10000;  // above this, check a seeded subsample
  std::size_t subsample = 2000;
  std::uint64_t seed = 7;
  std::vector<std::string> parameters;  // restrict to these names; empty checks all
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;

  bool within(double tolerance) const { return max_relative_error < tolerance; }
};

// Builds the scalar loss on a fresh graph bound to the tape.
using LossBuilder = std::function<Var(Graph&)>;

/// Runs backward once, then compares every (or a sampled) parameter
/// coordinate against central differences of `build`.
GradCheckReport grad_check(ParamTape& tape, const LossBuilder& build,
                           const GradCheckOptions& opts = {});

/// Same comparison against caller-supplied analytic gradients, one tensor
/// per tape parameter. Lets tests feed in deliberately wrong gradients.
GradCheckReport grad_check_against(ParamTape& tape, const std::vector<Tensor2D>& analytic,
                                   const LossBuilder& build, const GradCheckOptions& opts = {});

}  // namespace scrap::tensor
