#include "scrap/tensor/graph.hpp"

#include <cmath>

#include "scrap/common/error.hpp"

namespace scrap::tensor {

// ---- ParamTape -------------------------------------------------------------

std::size_t ParamTape::add(std::string name, Tensor2D init) {
  for (const auto& e : entries_) {
    if (e.name == name) throw ConfigError("ParamTape: duplicate parameter '" + name + "'");
  }
  Tensor2D g(init.rows(), init.cols());
  entries_.push_back(Entry{std::move(name), std::move(init), std::move(g)});
  return entries_.size() - 1;
}

std::size_t ParamTape::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw ConfigError("ParamTape: no parameter named '" + std::string(name) + "'");
}

std::size_t ParamTape::coordinate_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamTape::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
  gradients_ready_ = false;
}

bool operator==(const ParamTape& a, const ParamTape& b) {
  if (a.entries_.size() != b.entries_.size() || a.step_ != b.step_) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].name != b.entries_[i].name) return false;
    if (!(a.entries_[i].value == b.entries_[i].value)) return false;
  }
  return true;
}

// ---- Graph -----------------------------------------------------------------

Var Graph::push(Tensor2D value, std::function<void(Graph&, std::size_t)> backprop) {
  if (backward_done_) throw StateError("Graph: cannot record after backward()");
  nodes_.push_back(Node{std::move(value), Tensor2D{}, std::move(backprop), std::nullopt});
  return Var{nodes_.size() - 1};
}

Graph::Node& Graph::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw StateError("Graph: invalid variable");
  return nodes_[v.id];
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw StateError("Graph: invalid variable");
  return nodes_[v.id];
}

Tensor2D& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) {
    n.grad = Tensor2D(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Var Graph::input(Tensor2D value) { return push(std::move(value)); }

Var Graph::param(std::size_t index) {
  if (params_ == nullptr) throw StateError("Graph: no ParamTape attached");
  Var v = push(params_->value(index));
  nodes_[v.id].param_index = index;
  return v;
}

Var Graph::param(std::string_view name) {
  if (params_ == nullptr) throw StateError("Graph: no ParamTape attached");
  return param(params_->index_of(name));
}

const Tensor2D& Graph::value(Var v) const { return node(v).value; }

const Tensor2D& Graph::grad(Var v) const { return node(v).grad; }

double Graph::scalar(Var v) const {
  const auto& t = node(v).value;
  if (t.size() != 1) throw ShapeError("Graph::scalar on " + t.shape_string());
  return t[0];
}

Var Graph::linear(Var x, Var w, Var b) {
  const Tensor2D& xv = value(x);
  const Tensor2D& wv = value(w);
  const Tensor2D& bv = value(b);
  if (xv.cols() != wv.rows()) {
    throw ShapeError("linear: input " + xv.shape_string() + " incompatible with weight " +
                     wv.shape_string());
  }
  if (bv.size() != wv.cols()) {
    throw ShapeError("linear: bias " + bv.shape_string() + " incompatible with weight " +
                     wv.shape_string());
  }
  Tensor2D out = tensor::matmul(xv, wv);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  return push(std::move(out), [x, w, b](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    const Tensor2D& xv = g.nodes_[x.id].value;
    const Tensor2D& wv = g.nodes_[w.id].value;
    Tensor2D dx = matmul_transpose_b(gy, wv);
    Tensor2D dw = matmul_transpose_a(xv, gy);
    Tensor2D& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dx[i];
    Tensor2D& gw = g.grad_buffer(w.id);
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw[i];
    Tensor2D& gb = g.grad_buffer(b.id);
    for (std::size_t r = 0; r < gy.rows(); ++r)
      for (std::size_t j = 0; j < gy.cols(); ++j) gb[j] += gy(r, j);
  });
}

Var Graph::matmul(Var a, Var b) {
  Tensor2D out = tensor::matmul(value(a), value(b));
  return push(std::move(out), [a, b](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    Tensor2D da = matmul_transpose_b(gy, g.nodes_[b.id].value);
    Tensor2D db = matmul_transpose_a(g.nodes_[a.id].value, gy);
    Tensor2D& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += da[i];
    Tensor2D& gb = g.grad_buffer(b.id);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += db[i];
  });
}

Var Graph::transpose(Var a) {
  return push(tensor::transpose(value(a)), [a](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    Tensor2D& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < gy.rows(); ++i)
      for (std::size_t j = 0; j < gy.cols(); ++j) ga(j, i) += gy(i, j);
  });
}

Var Graph::add(Var a, Var b) {
  const Tensor2D& av = value(a);
  const Tensor2D& bv = value(b);
  if (!av.same_shape(bv)) {
    throw ShapeError("add: " + av.shape_string() + " vs " + bv.shape_string());
  }
  Tensor2D out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(out), [a, b](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    Tensor2D& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    Tensor2D& gb = g.grad_buffer(b.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
  });
}

Var Graph::mul(Var a, Var b) {
  const Tensor2D& av = value(a);
  const Tensor2D& bv = value(b);
  if (!av.same_shape(bv)) {
    throw ShapeError("mul: " + av.shape_string() + " vs " + bv.shape_string());
  }
  Tensor2D out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(std::move(out), [a, b](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    const Tensor2D& av = g.nodes_[a.id].value;
    const Tensor2D& bv = g.nodes_[b.id].value;
    {
      Tensor2D& ga = g.grad_buffer(a.id);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    Tensor2D& gb = g.grad_buffer(b.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
  });
}

Var Graph::scale(Var a, double c) {
  Tensor2D out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return push(std::move(out), [a, c](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    Tensor2D& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * c;
  });
}

Var Graph::sum(Var a) {
  double total = 0.0;
  for (double v : value(a).values()) total += v;
  return push(Tensor2D(1, 1, total), [a](Graph& g, std::size_t self) {
    const double gy = g.nodes_[self].grad[0];
    Tensor2D& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy;
  });
}

Var Graph::tanh(Var a) {
  Tensor2D out = value(a);
  for (double& v : out.values()) v = std::tanh(v);
  return push(std::move(out), [a](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    const Tensor2D& y = g.nodes_[self].value;
    Tensor2D& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * (1.0 - y[i] * y[i]);
  });
}

Var Graph::relu(Var a) {
  Tensor2D out = value(a);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), [a](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    const Tensor2D& x = g.nodes_[a.id].value;
    Tensor2D& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (x[i] > 0.0) ga[i] += gy[i];
    }
  });
}

Var Graph::softmax(Var a) {
  const Tensor2D& av = value(a);
  if (av.rows() != 1 && av.cols() != 1) {
    throw ShapeError("softmax: expected a vector, got " + av.shape_string());
  }
  std::vector<double> p = tensor::softmax(av.values());
  Tensor2D out(av.rows(), av.cols(), std::move(p));
  return push(std::move(out), [a](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    const Tensor2D& y = g.nodes_[self].value;
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += gy[i] * y[i];
    Tensor2D& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += y[i] * (gy[i] - dot);
  });
}

Var Graph::dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
  const Tensor2D& av = value(a);
  Tensor2D mask(av.rows(), av.cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = unit(rng) < rate ? 0.0 : keep_scale;
  Tensor2D out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return push(std::move(out), [a, mask = std::move(mask)](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    Tensor2D& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * mask[i];
  });
}

Var Graph::mean_rows(Var a) {
  const Tensor2D& av = value(a);
  if (av.rows() == 0) throw ShapeError("mean_rows: no rows");
  Tensor2D out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(r, j);
  const double inv = 1.0 / static_cast<double>(av.rows());
  for (double& v : out.values()) v *= inv;
  return push(std::move(out), [a, inv](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.nodes_[self].grad;
    Tensor2D& ga = g.grad_buffer(a.id);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(r, j) += gy(0, j) * inv;
  });
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (value(p).cols() != cols) {
      throw ShapeError("concat_rows: " + value(p).shape_string() + " vs width " +
                       std::to_string(cols));
    }
    rows += value(p).rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (Var p : parts) {
    auto vals = value(p).values();
    data.insert(data.end(), vals.begin(), vals.end());
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return push(Tensor2D(rows, cols, std::move(data)),
              [ids = std::move(ids)](Graph& g, std::size_t self) {
                const Tensor2D& gy = g.nodes_[self].grad;
                std::size_t offset = 0;
                for (Var p : ids) {
                  Tensor2D& gp = g.grad_buffer(p.id);
                  for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += gy[offset + i];
                  offset += gp.size();
                }
              });
}

Var Graph::mse(Var pred, std::span<const double> target) {
  const Tensor2D& pv = value(pred);
  if (pv.size() != target.size() || target.empty()) {
    throw ShapeError("mse: prediction " + pv.shape_string() + " vs " +
                     std::to_string(target.size()) + " targets");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - target[i];
    total += d * d;
  }
  const double n = static_cast<double>(pv.size());
  std::vector<double> t(target.begin(), target.end());
  return push(Tensor2D(1, 1, total / n), [pred, t = std::move(t), n](Graph& g, std::size_t self) {
    const double gy = g.nodes_[self].grad[0];
    const Tensor2D& pv = g.nodes_[pred.id].value;
    Tensor2D& gp = g.grad_buffer(pred.id);
    for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += gy * 2.0 * (pv[i] - t[i]) / n;
  });
}

Var Graph::cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor2D& lv = value(logits);
  if (lv.rows() != labels.size() || labels.empty()) {
    throw ShapeError("cross_entropy: logits " + lv.shape_string() + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  Tensor2D probs(lv.rows(), lv.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (labels[r] >= lv.cols()) {
      throw DataError("cross_entropy: label " + std::to_string(labels[r]) +
                      " out of range for " + std::to_string(lv.cols()) + " classes");
    }
    auto row = tensor::softmax(lv.row_view(r));
    // log-sum-exp form keeps the loss exact for confident predictions
    double mx = lv(r, 0);
    for (std::size_t j = 1; j < lv.cols(); ++j) mx = std::max(mx, lv(r, j));
    double se = 0.0;
    for (std::size_t j = 0; j < lv.cols(); ++j) se += std::exp(lv(r, j) - mx);
    total += mx + std::log(se) - lv(r, labels[r]);
    for (std::size_t j = 0; j < lv.cols(); ++j) probs(r, j) = row[j];
  }
  const double n = static_cast<double>(lv.rows());
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return push(Tensor2D(1, 1, total / n),
              [logits, probs = std::move(probs), lab = std::move(lab), n](Graph& g,
                                                                          std::size_t self) {
                const double gy = g.nodes_[self].grad[0];
                Tensor2D& gl = g.grad_buffer(logits.id);
                for (std::size_t r = 0; r < probs.rows(); ++r) {
                  for (std::size_t j = 0; j < probs.cols(); ++j) {
                    const double onehot = j == lab[r] ? 1.0 : 0.0;
                    gl(r, j) += gy * (probs(r, j) - onehot) / n;
                  }
                }
              });
}

void Graph::backward(Var loss) {
  if (nodes_.empty() || !loss.valid() || loss.id >= nodes_.size()) {
    throw StateError("backward: no recorded forward pass");
  }
  if (backward_done_) throw StateError("backward: already run on this graph");
  const Tensor2D& lv = nodes_[loss.id].value;
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got " + lv.shape_string());
  if (!std::isfinite(lv[0])) throw DataError("backward: non-finite loss");
  backward_done_ = true;

  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.backprop) n.backprop(*this, id);
  }

  if (params_ != nullptr) {
    for (const Node& n : nodes_) {
      if (!n.param_index || n.grad.empty()) continue;
      Tensor2D& pg = params_->grad(*n.param_index);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
    for (std::size_t i = 0; i < params_->size(); ++i) {
      if (!params_->grad(i).all_finite()) {
        throw DataError("backward: non-finite gradient for '" + params_->name(i) + "'");
      }
    }
    params_->mark_gradients_ready();
  }
}

}  // namespace scrap::tensor
