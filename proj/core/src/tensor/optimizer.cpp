#include "scrap/tensor/optimizer.hpp"

#include <cmath>

#include "scrap/common/error.hpp"

namespace scrap::tensor {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer kind '" + s + "'");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("optimizer: learning rate must be positive");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("optimizer: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be positive");
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Optimizer::step(ParamTape& tape) {
  if (!tape.gradients_ready()) {
    throw StateError("optimizer step requested before backward populated gradients");
  }
  if (cfg_.kind == OptimizerKind::kSgd) {
    for (std::size_t p = 0; p < tape.size(); ++p) {
      Tensor2D& w = tape.value(p);
      const Tensor2D& g = tape.grad(p);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg_.learning_rate * g[i];
    }
  } else {
    if (first_moment_.size() != tape.size()) {
      first_moment_.clear();
      second_moment_.clear();
      for (std::size_t p = 0; p < tape.size(); ++p) {
        first_moment_.emplace_back(tape.value(p).rows(), tape.value(p).cols());
        second_moment_.emplace_back(tape.value(p).rows(), tape.value(p).cols());
      }
    }
    const double t = static_cast<double>(tape.step() + 1);
    const double bias1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t p = 0; p < tape.size(); ++p) {
      Tensor2D& w = tape.value(p);
      const Tensor2D& g = tape.grad(p);
      Tensor2D& m = first_moment_[p];
      Tensor2D& v = second_moment_[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        w[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
      }
    }
  }
  tape.increment_step();
  tape.consume_gradients();
}

}  // namespace scrap::tensor
