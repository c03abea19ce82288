#include "scrap/mil/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scrap/common/error.hpp"

namespace scrap::mil {

using tensor::Graph;
using tensor::Tensor2D;
using tensor::Var;

// ---- Bag -------------------------------------------------------------------

std::size_t Bag::feature_dim() const {
  return instances.empty() ? 0 : instances.front().features.size();
}

std::vector<std::vector<double>> Bag::eligible_features() const {
  std::vector<std::vector<double>> out;
  for (const auto& inst : instances) {
    if (inst.eligible()) out.push_back(inst.features);
  }
  return out;
}

std::size_t Bag::eligible_count() const {
  return static_cast<std::size_t>(
      std::count_if(instances.begin(), instances.end(), [](const Instance& i) { return i.eligible(); }));
}

void Bag::validate() const {
  if (eligible_count() == 0) {
    throw DataError("bag '" + railcar_id + "' has no eligible instance");
  }
  const std::size_t dim = feature_dim();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].features.size() != dim) {
      throw DataError("bag '" + railcar_id + "': instance " + std::to_string(i) + " has dimension " +
                      std::to_string(instances[i].features.size()) + ", expected " +
                      std::to_string(dim));
    }
    if (i > 0 && instances[i].layer_index <= instances[i - 1].layer_index) {
      throw DataError("bag '" + railcar_id + "': layers not ordered by index");
    }
  }
}

void BagLabel::validate(std::size_t class_num) const {
  if (!(contamination >= 0.0 && contamination <= 100.0)) {
    throw DataError("label contamination outside [0, 100]");
  }
  if (grade && *grade >= class_num) {
    throw DataError("label grade " + std::to_string(*grade) + " out of range");
  }
}

// ---- dims / pooling --------------------------------------------------------

void ModelDims::validate() const {
  if (feature_dim == 0 || enc_dim == 0 || attn_dim == 0 || head_hidden == 0 || class_num == 0) {
    throw ConfigError("model dims must all be positive");
  }
}

std::string to_string(Pooling p) { return p == Pooling::kAttention ? "attention" : "mean"; }

Pooling pooling_from_string(const std::string& s) {
  if (s == "attention") return Pooling::kAttention;
  if (s == "mean") return Pooling::kMean;
  throw ConfigError("unknown pooling '" + s + "'");
}

// ---- init ------------------------------------------------------------------

namespace {

Tensor2D uniform_init(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor2D t(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

void add_linear(tensor::ParamTape& tape, const std::string& prefix, std::size_t in,
                std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  tape.add(prefix + ".weight", uniform_init(in, out, bound, rng));
  tape.add(prefix + ".bias", uniform_init(1, out, bound, rng));
}

}  // namespace

MilModel MilModel::initialize(const ModelDims& dims, std::uint64_t seed,
                              std::vector<std::string> class_names) {
  dims.validate();
  MilModel m;
  m.dims = dims;
  if (class_names.empty()) {
    for (std::size_t c = 0; c < dims.class_num; ++c) class_names.push_back("class" + std::to_string(c));
  }
  if (class_names.size() != dims.class_num) {
    throw ConfigError("class name count does not match class_num");
  }
  m.class_names = std::move(class_names);
  std::mt19937_64 rng(seed);
  add_linear(m.params, "encoder", dims.feature_dim, dims.enc_dim, rng);
  add_linear(m.params, "attention.0", dims.enc_dim, dims.attn_dim, rng);
  add_linear(m.params, "attention.2", dims.attn_dim, 1, rng);
  add_linear(m.params, "regressor.0", dims.enc_dim, dims.head_hidden, rng);
  add_linear(m.params, "regressor.3", dims.head_hidden, 1, rng);
  add_linear(m.params, "classifier.0", dims.enc_dim, dims.head_hidden, rng);
  add_linear(m.params, "classifier.3", dims.head_hidden, dims.class_num, rng);
  return m;
}

// ---- graph pieces ----------------------------------------------------------

namespace {

template <typename BindFn>
ModelVars bind_with(BindFn bind) {
  ModelVars v;
  v.enc_w = bind("encoder.weight");
  v.enc_b = bind("encoder.bias");
  v.att1_w = bind("attention.0.weight");
  v.att1_b = bind("attention.0.bias");
  v.att2_w = bind("attention.2.weight");
  v.att2_b = bind("attention.2.bias");
  v.reg1_w = bind("regressor.0.weight");
  v.reg1_b = bind("regressor.0.bias");
  v.reg2_w = bind("regressor.3.weight");
  v.reg2_b = bind("regressor.3.bias");
  v.cls1_w = bind("classifier.0.weight");
  v.cls1_b = bind("classifier.0.bias");
  v.cls2_w = bind("classifier.3.weight");
  v.cls2_b = bind("classifier.3.bias");
  return v;
}

}  // namespace

ModelVars bind_trainable(Graph& g, const MilModel&) {
  return bind_with([&](const char* name) { return g.param(name); });
}

ModelVars bind_frozen(Graph& g, const MilModel& model) {
  return bind_with([&](const char* name) {
    return g.input(model.params.value(model.params.index_of(name)));
  });
}

Var encode(Graph& g, const ModelVars& v, Var x) { return g.relu(g.linear(x, v.enc_w, v.enc_b)); }

PooledBag pool_bag(Graph& g, const ModelVars& v, Var x, Pooling pooling) {
  PooledBag out;
  out.features = encode(g, v, x);
  const std::size_t s = g.value(out.features).rows();
  if (pooling == Pooling::kAttention) {
    Var hidden = g.tanh(g.linear(out.features, v.att1_w, v.att1_b));
    Var scores = g.linear(hidden, v.att2_w, v.att2_b);
    out.alpha = g.softmax(scores);
    out.z = g.matmul(g.transpose(out.alpha), out.features);
  } else {
    out.alpha = g.input(Tensor2D(s, 1, 1.0 / static_cast<double>(s)));
    out.z = g.mean_rows(out.features);
  }
  return out;
}

Var regression_head(Graph& g, const ModelVars& v, Var z, double dropout, std::mt19937_64* rng) {
  Var h = g.relu(g.linear(z, v.reg1_w, v.reg1_b));
  if (rng != nullptr && dropout > 0.0) h = g.dropout(h, dropout, *rng);
  return g.linear(h, v.reg2_w, v.reg2_b);
}

Var classification_head(Graph& g, const ModelVars& v, Var z, double dropout,
                        std::mt19937_64* rng) {
  Var h = g.relu(g.linear(z, v.cls1_w, v.cls1_b));
  if (rng != nullptr && dropout > 0.0) h = g.dropout(h, dropout, *rng);
  return g.linear(h, v.cls2_w, v.cls2_b);
}

Tensor2D stack_instances(std::span<const std::vector<double>> instances,
                         std::size_t feature_dim) {
  if (instances.empty()) throw DataError("bag has no instances");
  std::vector<double> data;
  data.reserve(instances.size() * feature_dim);
  for (const auto& inst : instances) {
    if (inst.size() != feature_dim) {
      std::ostringstream os;
      os << "instance dimension " << inst.size() << " does not match feature_dim " << feature_dim;
      throw ShapeError(os.str());
    }
    data.insert(data.end(), inst.begin(), inst.end());
  }
  return Tensor2D(instances.size(), feature_dim, std::move(data));
}

// ---- inference -------------------------------------------------------------

BagEmbedding forward_bag(const MilModel& model, std::span<const std::vector<double>> instances) {
  Graph g;
  const ModelVars v = bind_frozen(g, model);
  Var x = g.input(stack_instances(instances, model.dims.feature_dim));
  PooledBag pooled = pool_bag(g, v, x, model.pooling);
  const auto z = g.value(pooled.z).values();
  const auto a = g.value(pooled.alpha).values();
  return BagEmbedding{{z.begin(), z.end()}, {a.begin(), a.end()}};
}

namespace {

Var z_input(Graph& g, const MilModel& model, std::span<const double> z) {
  if (z.size() != model.dims.enc_dim) {
    throw ShapeError("embedding has dimension " + std::to_string(z.size()) + ", expected " +
                     std::to_string(model.dims.enc_dim));
  }
  return g.input(Tensor2D::row(z));
}

}  // namespace

double predict_reg(const MilModel& model, std::span<const double> z) {
  Graph g;
  const ModelVars v = bind_frozen(g, model);
  return g.scalar(regression_head(g, v, z_input(g, model, z), 0.0, nullptr));
}

std::vector<double> predict_cls(const MilModel& model, std::span<const double> z) {
  Graph g;
  const ModelVars v = bind_frozen(g, model);
  Var logits = classification_head(g, v, z_input(g, model, z), 0.0, nullptr);
  return tensor::softmax(g.value(logits).values());
}

double regression_confidence(std::span<const double> outputs, double sigma_ref) {
  if (outputs.size() <= 1) return 1.0;
  double mean = 0.0;
  for (double o : outputs) mean += o;
  mean /= static_cast<double>(outputs.size());
  double var = 0.0;
  for (double o : outputs) var += (o - mean) * (o - mean);
  var /= static_cast<double>(outputs.size());
  const double sigma = std::sqrt(var);
  if (!(sigma_ref > 0.0)) return sigma > 0.0 ? 0.0 : 1.0;
  return 1.0 - std::min(1.0, sigma / sigma_ref);
}

BagPrediction predict_bag(const MilModel& model, std::span<const std::vector<double>> instances) {
  Graph g;
  const ModelVars v = bind_frozen(g, model);
  Var x = g.input(stack_instances(instances, model.dims.feature_dim));
  PooledBag pooled = pool_bag(g, v, x, model.pooling);
  Var reg = regression_head(g, v, pooled.z, 0.0, nullptr);
  Var logits = classification_head(g, v, pooled.z, 0.0, nullptr);
  // Each encoded instance run through the head on its own (a bag of one).
  Var per_instance = regression_head(g, v, pooled.features, 0.0, nullptr);

  BagPrediction out;
  out.contamination = g.scalar(reg);
  out.class_probs = tensor::softmax(g.value(logits).values());
  out.grade = static_cast<std::size_t>(
      std::max_element(out.class_probs.begin(), out.class_probs.end()) - out.class_probs.begin());
  const auto a = g.value(pooled.alpha).values();
  out.alpha.assign(a.begin(), a.end());
  const auto pi = g.value(per_instance).values();
  out.instance_contamination.assign(pi.begin(), pi.end());
  out.confidence.classification = out.class_probs[out.grade];
  out.confidence.regression = regression_confidence(out.instance_contamination, model.sigma_ref);
  return out;
}

Confidence confidence(const MilModel& model, const Bag& bag) {
  const auto features = bag.eligible_features();
  if (features.empty()) throw DataError("bag '" + bag.railcar_id + "' has no eligible instance");
  return predict_bag(model, features).confidence;
}

}  // namespace scrap::mil
