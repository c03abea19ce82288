#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "scrap/mil/bag.hpp"
#include "scrap/mil/model.hpp"
#include "scrap/tensor/optimizer.hpp"

namespace scrap::mil {

// Epochs, batch size and learning rate are not pinned by the method; the
// defaults here are the ones the simulator campaigns were tuned with.
struct TrainingConfig {
  std::size_t epochs = 60;
  std::size_t samples_per_bag = 5;
  std::size_t batch_size = 8;
  double lambda_cls = 1.0;
  tensor::OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  ModelDims dims;
  Pooling pooling = Pooling::kAttention;
  double dropout_rate = 0.25;
  double sigma_ref = 2.0;
  // Inference pools every eligible layer; false pools a seeded s-sample.
  bool pool_all_at_inference = true;
  std::vector<std::string> class_names;
  std::string version = "1";

  void validate() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

/// Draws s instances: uniformly without replacement when the bag holds at
/// least s eligible instances, with replacement otherwise. Returned in draw
/// order.
std::vector<std::size_t> sample_instance_indices(std::size_t eligible, std::size_t s,
                                                 std::mt19937_64& rng);
std::vector<std::vector<double>> sample_instances(const Bag& bag, std::size_t s,
                                                  std::mt19937_64& rng);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainResult {
  MilModel model;
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;      // total objective per optimizer step
  std::vector<double> step_reg_losses;  // regression term per optimizer step
};

/// Attention-MIL regression training loop.
TrainResult train_mil(const Dataset& train, const TrainingConfig& cfg,
                      const Dataset* validation = nullptr);

/// Joint regression + classification: loss = L_reg + λ_cls · L_cls.
TrainResult train_mtl(const Dataset& train, const TrainingConfig& cfg,
                      const Dataset* validation = nullptr);

struct LambdaScore {
  double lambda = 0.0;
  double val_mae = 0.0;
  double val_macro_f1 = 0.0;
  double score = 0.0;  // val MAE + (1 - val macro F1)
};

struct LambdaSelection {
  double best_lambda = 0.0;
  std::vector<LambdaScore> scores;
};

/// Trains one MTL model per grid value and keeps the λ with the lowest
/// validation composite score; ties resolve to the smaller λ.
LambdaSelection select_lambda(const std::vector<double>& grid, const Dataset& train,
                              const Dataset& validation, const TrainingConfig& cfg);

/// Picks the winner from already-computed scores (ties → smaller λ).
double argmin_lambda(const std::vector<LambdaScore>& scores);

struct DatasetPredictions {
  std::vector<double> contamination;
  std::vector<std::size_t> grade;
};

/// Eval-mode predictions for every bag (all eligible layers pooled).
DatasetPredictions predict_dataset(const MilModel& model, const Dataset& data);

}  // namespace scrap::mil
