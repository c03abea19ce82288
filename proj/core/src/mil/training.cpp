#include "scrap/mil/training.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "scrap/common/error.hpp"
#include "scrap/metrics/metrics.hpp"

namespace scrap::mil {

using tensor::Graph;
using tensor::Var;

void TrainingConfig::validate() const {
  if (epochs < 1) throw ConfigError("training: epochs must be >= 1");
  if (samples_per_bag < 1) throw ConfigError("training: samples per bag must be >= 1");
  if (batch_size < 1) throw ConfigError("training: batch size must be >= 1");
  if (!(lambda_cls >= 0.0) || !std::isfinite(lambda_cls)) {
    throw ConfigError("training: lambda_cls must be a nonnegative real");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("training: dropout rate must be in [0, 1)");
  }
  optimizer.validate();
  dims.validate();
  if (!class_names.empty() && class_names.size() != dims.class_num) {
    throw ConfigError("training: class names do not match class_num");
  }
  if (version.empty()) throw ConfigError("training: model version must not be empty");
}

nlohmann::json TrainingConfig::to_json() const {
  return {
      {"epochs", epochs},
      {"samples_per_bag", samples_per_bag},
      {"batch_size", batch_size},
      {"lambda_cls", lambda_cls},
      {"optimizer",
       {{"kind", tensor::to_string(optimizer.kind)},
        {"learning_rate", optimizer.learning_rate},
        {"beta1", optimizer.beta1},
        {"beta2", optimizer.beta2},
        {"epsilon", optimizer.epsilon},
        {"seed", optimizer.seed}}},
      {"seed", seed},
      {"dims",
       {{"feature_dim", dims.feature_dim},
        {"enc_dim", dims.enc_dim},
        {"attn_dim", dims.attn_dim},
        {"head_hidden", dims.head_hidden},
        {"class_num", dims.class_num}}},
      {"pooling", to_string(pooling)},
      {"dropout_rate", dropout_rate},
      {"sigma_ref", sigma_ref},
      {"pool_all_at_inference", pool_all_at_inference},
      {"class_names", class_names},
      {"version", version},
  };
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.samples_per_bag = j.value("samples_per_bag", c.samples_per_bag);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lambda_cls = j.value("lambda_cls", c.lambda_cls);
    c.seed = j.value("seed", c.seed);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.optimizer.kind = tensor::optimizer_kind_from_string(o.value("kind", std::string("adam")));
      c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
      c.optimizer.seed = o.value("seed", c.optimizer.seed);
    }
    if (j.contains("dims")) {
      const auto& d = j.at("dims");
      c.dims.feature_dim = d.value("feature_dim", c.dims.feature_dim);
      c.dims.enc_dim = d.value("enc_dim", c.dims.enc_dim);
      c.dims.attn_dim = d.value("attn_dim", c.dims.attn_dim);
      c.dims.head_hidden = d.value("head_hidden", c.dims.head_hidden);
      c.dims.class_num = d.value("class_num", c.dims.class_num);
    }
    c.pooling = pooling_from_string(j.value("pooling", to_string(c.pooling)));
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.sigma_ref = j.value("sigma_ref", c.sigma_ref);
    c.pool_all_at_inference = j.value("pool_all_at_inference", c.pool_all_at_inference);
    c.class_names = j.value("class_names", c.class_names);
    c.version = j.value("version", c.version);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return c;
}

std::vector<std::size_t> sample_instance_indices(std::size_t eligible, std::size_t s,
                                                 std::mt19937_64& rng) {
  if (eligible == 0) throw DataError("sample_instances: bag has no eligible instance");
  std::vector<std::size_t> out;
  out.reserve(s);
  if (eligible >= s) {
    std::vector<std::size_t> pool(eligible);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < s; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, eligible - 1);
      std::swap(pool[i], pool[pick(rng)]);
      out.push_back(pool[i]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, eligible - 1);
    for (std::size_t i = 0; i < s; ++i) out.push_back(pick(rng));
  }
  return out;
}

std::vector<std::vector<double>> sample_instances(const Bag& bag, std::size_t s,
                                                  std::mt19937_64& rng) {
  const auto eligible = bag.eligible_features();
  const auto idx = sample_instance_indices(eligible.size(), s, rng);
  std::vector<std::vector<double>> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(eligible[i]);
  return out;
}

namespace {

// Independent streams so that adding the classification head never shifts
// the draws seen by the regression path.
struct RunStreams {
  std::mt19937_64 shuffle;
  std::mt19937_64 sample;
  std::mt19937_64 dropout_reg;
  std::mt19937_64 dropout_cls;

  explicit RunStreams(std::uint64_t seed) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(0x5eedu)};
    std::array<std::uint64_t, 4> s{};
    seq.generate(s.begin(), s.end());
    shuffle.seed(s[0]);
    sample.seed(s[1]);
    dropout_reg.seed(s[2]);
    dropout_cls.seed(s[3]);
  }
};

void check_dataset(const Dataset& data, const TrainingConfig& cfg, bool joint, const char* what) {
  for (const auto& item : data) {
    item.bag.validate();
    if (item.bag.feature_dim() != cfg.dims.feature_dim) {
      throw DataError(std::string(what) + ": bag '" + item.bag.railcar_id + "' has feature_dim " +
                      std::to_string(item.bag.feature_dim()) + ", model expects " +
                      std::to_string(cfg.dims.feature_dim));
    }
    item.label.validate(cfg.dims.class_num);
    if (joint && !item.label.grade) {
      throw DataError(std::string(what) + ": bag '" + item.bag.railcar_id +
                      "' is missing its classification label");
    }
  }
}

std::vector<std::vector<double>> inference_instances(const MilModel& model, const Bag& bag,
                                                     std::size_t s, std::mt19937_64& rng) {
  if (model.metadata.value("pool_all_at_inference", true)) return bag.eligible_features();
  return sample_instances(bag, s, rng);
}

double validation_loss(const MilModel& model, const Dataset& val, const TrainingConfig& cfg,
                       bool joint) {
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  double reg = 0.0, cls = 0.0;
  for (const auto& item : val) {
    const auto pred = predict_bag(model, inference_instances(model, item.bag, cfg.samples_per_bag, rng));
    const double d = pred.contamination - item.label.contamination;
    reg += d * d;
    if (joint) cls += -std::log(std::max(pred.class_probs[*item.label.grade], 1e-300));
  }
  const double n = static_cast<double>(val.size());
  return reg / n + (joint ? cfg.lambda_cls * cls / n : 0.0);
}

TrainResult train_impl(const Dataset& train, const TrainingConfig& cfg, const Dataset* val,
                       bool joint) {
  cfg.validate();
  if (train.empty()) throw DataError("training: empty dataset");
  check_dataset(train, cfg, joint, "training");
  if (val != nullptr) check_dataset(*val, cfg, joint, "validation");

  TrainResult result;
  MilModel& model = result.model;
  model = MilModel::initialize(cfg.dims, cfg.seed, cfg.class_names);
  model.pooling = cfg.pooling;
  model.dropout_rate = cfg.dropout_rate;
  model.sigma_ref = cfg.sigma_ref;
  model.metadata["pool_all_at_inference"] = cfg.pool_all_at_inference;

  RunStreams streams(cfg.seed);
  tensor::Optimizer optimizer(cfg.optimizer);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), streams.shuffle);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      model.params.zero_grad();
      Graph g(&model.params);
      const ModelVars vars = bind_trainable(g, model);

      std::vector<Var> zs;
      std::vector<double> targets;
      std::vector<std::size_t> grades;
      for (std::size_t k = start; k < end; ++k) {
        const LabeledBag& item = train[order[k]];
        auto chosen = sample_instances(item.bag, cfg.samples_per_bag, streams.sample);
        Var x = g.input(stack_instances(chosen, cfg.dims.feature_dim));
        zs.push_back(pool_bag(g, vars, x, cfg.pooling).z);
        targets.push_back(item.label.contamination);
        if (joint) grades.push_back(*item.label.grade);
      }
      Var z = g.concat_rows(zs);
      Var reg_out = regression_head(g, vars, z, cfg.dropout_rate, &streams.dropout_reg);
      Var reg_loss = g.mse(reg_out, targets);
      Var loss = reg_loss;
      if (joint) {
        Var logits = classification_head(g, vars, z, cfg.dropout_rate, &streams.dropout_cls);
        loss = g.add(reg_loss, g.scale(g.cross_entropy(logits, grades), cfg.lambda_cls));
      }
      const double loss_value = g.scalar(loss);
      if (!std::isfinite(loss_value)) {
        std::ostringstream os;
        os << "training diverged: non-finite loss at epoch " << epoch << ", step "
           << result.step_losses.size() + 1 << " (lr " << cfg.optimizer.learning_rate << ")";
        throw DataError(os.str());
      }
      g.backward(loss);
      optimizer.step(model.params);
      result.step_losses.push_back(loss_value);
      result.step_reg_losses.push_back(g.scalar(reg_loss));
      epoch_total += loss_value * static_cast<double>(end - start);
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_total / static_cast<double>(train.size());
    if (val != nullptr && !val->empty()) log.val_loss = validation_loss(model, *val, cfg, joint);
    result.epochs.push_back(log);
  }

  model.version = cfg.version;
  model.metadata["objective"] = joint ? "mtl" : "mil";
  model.metadata["training"] = cfg.to_json();
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : result.epochs) {
    nlohmann::json row = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.val_loss) row["val_loss"] = *e.val_loss;
    history.push_back(row);
  }
  model.metadata["history"] = history;
  return result;
}

}  // namespace

TrainResult train_mil(const Dataset& train, const TrainingConfig& cfg, const Dataset* validation) {
  return train_impl(train, cfg, validation, false);
}

TrainResult train_mtl(const Dataset& train, const TrainingConfig& cfg, const Dataset* validation) {
  return train_impl(train, cfg, validation, true);
}

DatasetPredictions predict_dataset(const MilModel& model, const Dataset& data) {
  DatasetPredictions out;
  std::mt19937_64 rng(0x1f2e3d4cULL);
  const std::size_t s = model.metadata.contains("training")
                            ? model.metadata["training"].value("samples_per_bag", std::size_t{5})
                            : std::size_t{5};
  for (const auto& item : data) {
    const auto pred = predict_bag(model, inference_instances(model, item.bag, s, rng));
    out.contamination.push_back(pred.contamination);
    out.grade.push_back(pred.grade);
  }
  return out;
}

double argmin_lambda(const std::vector<LambdaScore>& scores) {
  if (scores.empty()) throw ConfigError("select_lambda: empty grid");
  const LambdaScore* best = &scores.front();
  for (const auto& s : scores) {
    if (s.score < best->score || (s.score == best->score && s.lambda < best->lambda)) best = &s;
  }
  return best->lambda;
}

LambdaSelection select_lambda(const std::vector<double>& grid, const Dataset& train,
                              const Dataset& validation, const TrainingConfig& cfg) {
  if (grid.empty()) throw ConfigError("select_lambda: empty grid");
  if (validation.empty()) throw DataError("select_lambda: empty validation set");
  LambdaSelection sel;
  for (double lambda : grid) {
    TrainingConfig c = cfg;
    c.lambda_cls = lambda;
    const TrainResult r = train_mtl(train, c);
    const DatasetPredictions pred = predict_dataset(r.model, validation);
    std::vector<double> truth;
    std::vector<std::size_t> grades;
    for (const auto& item : validation) {
      truth.push_back(item.label.contamination);
      grades.push_back(*item.label.grade);
    }
    LambdaScore s;
    s.lambda = lambda;
    s.val_mae = metrics::mae(pred.contamination, truth);
    s.val_macro_f1 =
        metrics::classification_metrics(pred.grade, grades, cfg.dims.class_num).macro_f1;
    s.score = s.val_mae + (1.0 - s.val_macro_f1);
    sel.scores.push_back(s);
  }
  sel.best_lambda = argmin_lambda(sel.scores);
  return sel;
}

}  // namespace scrap::mil
