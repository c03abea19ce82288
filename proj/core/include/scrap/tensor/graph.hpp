#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scrap/tensor/tensor.hpp"

namespace scrap::tensor {

// Named trainable tensors with a same-shaped gradient buffer each.
class ParamTape {
 public:
  std::size_t add(std::string name, Tensor2D init);

  std::size_t size() const { return entries_.size(); }
  std::size_t index_of(std::string_view name) const;
  const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  Tensor2D& value(std::size_t i) { return entries_.at(i).value; }
  const Tensor2D& value(std::size_t i) const { return entries_.at(i).value; }
  Tensor2D& grad(std::size_t i) { return entries_.at(i).grad; }
  const Tensor2D& grad(std::size_t i) const { return entries_.at(i).grad; }
  std::size_t coordinate_count() const;

  void zero_grad();
  // Set by Graph::backward, cleared by zero_grad and by an optimizer step.
  bool gradients_ready() const { return gradients_ready_; }
  void mark_gradients_ready() { gradients_ready_ = true; }
  void consume_gradients() { gradients_ready_ = false; }

  std::size_t step() const { return step_; }
  void increment_step() { ++step_; }

  friend bool operator==(const ParamTape& a, const ParamTape& b);

 private:
  struct Entry {
    std::string name;
    Tensor2D value;
    Tensor2D grad;
  };
  std::vector<Entry> entries_;
  bool gradients_ready_ = false;
  std::size_t step_ = 0;
};

struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

// Records a forward computation and replays it in reverse to accumulate
// gradients. Node ids are assigned in creation order, which is already a
// topological order, so backward is a single reverse sweep.
class Graph {
 public:
  explicit Graph(ParamTape* params = nullptr) : params_(params) {}

  Var input(Tensor2D value);
  Var param(std::size_t index);
  Var param(std::string_view name);

  const Tensor2D& value(Var v) const;
  const Tensor2D& grad(Var v) const;
  double scalar(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  Var linear(Var x, Var w, Var b);  // x·w + b, b is 1×out broadcast over rows
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var sum(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var softmax(Var a);  // over all entries of a row or column vector
  Var dropout(Var a, double rate, std::mt19937_64& rng);
  Var mean_rows(Var a);  // n×d → 1×d
  Var concat_rows(std::span<const Var> parts);
  Var mse(Var pred, std::span<const double> target);
  Var cross_entropy(Var logits, std::span<const std::size_t> labels);

  void backward(Var loss);

 private:
  struct Node {
    Tensor2D value;
    Tensor2D grad;
    std::function<void(Graph&, std::size_t)> backprop;
    std::optional<std::size_t> param_index;
  };

  Var push(Tensor2D value, std::function<void(Graph&, std::size_t)> backprop = {});
  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor2D& grad_buffer(std::size_t id);

  ParamTape* params_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace scrap::tensor
