#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "scrap/mil/bag.hpp"
#include "scrap/tensor/graph.hpp"

namespace scrap::mil {

struct ModelDims {
  std::size_t feature_dim = 32;
  std::size_t enc_dim = 128;
  std::size_t attn_dim = 64;
  std::size_t head_hidden = 256;
  std::size_t class_num = 4;

  void validate() const;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

enum class Pooling { kAttention, kMean };

std::string to_string(Pooling p);
Pooling pooling_from_string(const std::string& s);

// Encoder (Linear-ReLU) → attention (Linear-Tanh-Linear, softmax over the
// bag) → weighted sum → regression and classification heads
// (Linear-ReLU-Dropout-Linear each).
struct MilModel {
  ModelDims dims;
  Pooling pooling = Pooling::kAttention;
  double dropout_rate = 0.25;
  double sigma_ref = 2.0;  // per-instance spread at which reg confidence hits 0
  std::vector<std::string> class_names;
  std::string version;
  nlohmann::json metadata = nlohmann::json::object();
  tensor::ParamTape params;

  static MilModel initialize(const ModelDims& dims, std::uint64_t seed,
                             std::vector<std::string> class_names = {});
};

/// Parameter handles bound into one graph.
struct ModelVars {
  tensor::Var enc_w, enc_b;
  tensor::Var att1_w, att1_b, att2_w, att2_b;
  tensor::Var reg1_w, reg1_b, reg2_w, reg2_b;
  tensor::Var cls1_w, cls1_b, cls2_w, cls2_b;
};

/// Trainable binding: gradients flow into model.params.
ModelVars bind_trainable(tensor::Graph& g, const MilModel& model);
/// Frozen binding: parameters enter as constants, the model is untouched.
ModelVars bind_frozen(tensor::Graph& g, const MilModel& model);

struct PooledBag {
  tensor::Var features;  // s×enc_dim
  tensor::Var alpha;     // s×1
  tensor::Var z;         // 1×enc_dim
};

tensor::Var encode(tensor::Graph& g, const ModelVars& v, tensor::Var x);
PooledBag pool_bag(tensor::Graph& g, const ModelVars& v, tensor::Var x, Pooling pooling);
tensor::Var regression_head(tensor::Graph& g, const ModelVars& v, tensor::Var z, double dropout,
                            std::mt19937_64* rng);
tensor::Var classification_head(tensor::Graph& g, const ModelVars& v, tensor::Var z,
                                double dropout, std::mt19937_64* rng);

/// Stacks instance feature vectors into an s×feature_dim tensor.
tensor::Tensor2D stack_instances(std::span<const std::vector<double>> instances,
                                 std::size_t feature_dim);

struct BagEmbedding {
  std::vector<double> z;
  std::vector<double> alpha;
};

// Inference entry points. All run in eval mode (no dropout), only read the
// model, and are safe to call concurrently on a frozen model.
BagEmbedding forward_bag(const MilModel& model, std::span<const std::vector<double>> instances);
double predict_reg(const MilModel& model, std::span<const double> z);
std::vector<double> predict_cls(const MilModel& model, std::span<const double> z);

struct Confidence {
  double regression = 1.0;
  double classification = 0.0;
};

struct BagPrediction {
  double contamination = 0.0;
  std::vector<double> class_probs;
  std::size_t grade = 0;
  std::vector<double> alpha;
  std::vector<double> instance_contamination;  // each instance pooled alone
  Confidence confidence;
};

/// Full bag inference: pooled estimate, class probabilities, per-instance
/// outputs and both confidences.
BagPrediction predict_bag(const MilModel& model, std::span<const std::vector<double>> instances);

/// reg = 1 - min(1, σ_inst / σ_ref) over per-instance regression outputs
/// (population σ); cls = max class probability.
Confidence confidence(const MilModel& model, const Bag& bag);
double regression_confidence(std::span<const double> instance_outputs, double sigma_ref);

}  // namespace scrap::mil
