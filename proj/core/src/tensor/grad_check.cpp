#include "scrap/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "scrap/common/error.hpp"

namespace scrap::tensor {
namespace {

double evaluate(ParamTape& tape, const LossBuilder& build) {
  Graph g(&tape);
  return g.scalar(build(g));
}

}  // namespace

GradCheckReport grad_check(ParamTape& tape, const LossBuilder& build,
                           const GradCheckOptions& opts) {
  tape.zero_grad();
  {
    Graph g(&tape);
    g.backward(build(g));
  }
  std::vector<Tensor2D> analytic;
  analytic.reserve(tape.size());
  for (std::size_t p = 0; p < tape.size(); ++p) analytic.push_back(tape.grad(p));
  tape.zero_grad();
  return grad_check_against(tape, analytic, build, opts);
}

GradCheckReport grad_check_against(ParamTape& tape, const std::vector<Tensor2D>& analytic,
                                   const LossBuilder& build, const GradCheckOptions& opts) {
  if (analytic.size() != tape.size()) {
    throw ShapeError("grad_check: analytic gradient count does not match the tape");
  }
  // Flatten (param, index) so the subsample is uniform over coordinates.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  coords.reserve(tape.coordinate_count());
  for (std::size_t p = 0; p < tape.size(); ++p) {
    if (!analytic[p].same_shape(tape.value(p))) {
      throw ShapeError("grad_check: gradient shape mismatch for '" + tape.name(p) + "'");
    }
    if (!opts.parameters.empty() &&
        std::find(opts.parameters.begin(), opts.parameters.end(), tape.name(p)) == opts.parameters.end())
      continue;
    for (std::size_t i = 0; i < tape.value(p).size(); ++i) coords.emplace_back(p, i);
  }
  for (const auto& name : opts.parameters) {
    bool known = false;
    for (std::size_t p = 0; p < tape.size() && !known; ++p) known = tape.name(p) == name;
    if (!known) throw ConfigError("grad_check: unknown parameter '" + name + "'");
  }
  if (coords.size() > opts.max_coordinates) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min(opts.subsample, coords.size()));
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  for (auto [p, i] : coords) {
    double& w = tape.value(p)[i];
    const double saved = w;
    w = saved + opts.step;
    const double up = evaluate(tape, build);
    w = saved - opts.step;
    const double down = evaluate(tape, build);
    w = saved;
    const double numeric = (up - down) / (2.0 * opts.step);
    const double a = analytic[p][i];
    const double denom = std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
    const double rel = std::abs(a - numeric) / denom;
    ++report.coordinates_checked;
    if (rel > report.max_relative_error || report.coordinates_checked == 1) {
      report.max_relative_error = rel;
      report.worst_parameter = tape.name(p);
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace scrap::tensor
