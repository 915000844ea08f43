#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "real/common.hpp"
#include "real/dataset.hpp"

namespace real {

enum class ModelKind { Softmax, Mlp };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::Softmax;
  int hidden_dim = 32;        // mlp only
  double dropout_rate = 0.0;  // mlp only
  double learning_rate = 0.1;
  int batch_size = 8;
  int warmup_epochs = 10;
  int round_epochs = 4;
  int evals_per_epoch = 4;
  std::uint64_t weight_init_seed = 0;

  void validate() const;
};

/// Stable default step sizes on unit-scale features.
inline constexpr double kSoftmaxDefaultLearningRate = 0.1;
inline constexpr double kMlpDefaultLearningRate = 0.01;

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Parameters and gradients share this layout: layers in forward order.
using Parameters = std::vector<DenseLayer>;

class TrainedModel {
 public:
  /// Zero weights for softmax; seeded uniform(-0.1, 0.1) for the mlp.
  static TrainedModel initialize(const ModelConfig& config, std::size_t input_dim, int num_classes);
  TrainedModel(ModelConfig config, int num_classes, Parameters params);

  const ModelConfig& config() const { return config_; }
  int num_classes() const { return num_classes_; }
  std::size_t input_dim() const { return static_cast<std::size_t>(params_.front().weight.cols()); }
  std::size_t embedding_dim() const;
  const Parameters& parameters() const { return params_; }
  Parameters& mutable_parameters() { return params_; }

 private:
  ModelConfig config_;
  int num_classes_;
  Parameters params_;
};

struct TrainStats {
  double first_step_loss = 0.0;
  double best_validation_accuracy = 0.0;
  std::vector<double> loss_curve;  // mean training-batch loss at each evaluation point
};

/// Mini-batch gradient descent on mean cross-entropy. Validation accuracy is
/// measured evals_per_epoch times per epoch and the best snapshot (earliest on
/// ties) is returned. An empty validation set falls back to training accuracy.
std::pair<TrainedModel, TrainStats> train(const ModelConfig& config, const Dataset& data,
                                          const std::vector<LabeledPair>& train_set,
                                          const std::vector<LabeledPair>& val_set, int epochs,
                                          std::uint64_t rng_seed,
                                          const std::optional<TrainedModel>& warm_start = std::nullopt);

/// Rows are softmax probabilities; dropout is off.
Matrix predict_proba(const TrainedModel& model, const Matrix& features);

/// Row-wise argmax of predict_proba, ties to the lower class.
std::vector<int> predict(const TrainedModel& model, const Matrix& features);

/// Identity for softmax; post-tanh hidden activations for the mlp.
Matrix encode(const TrainedModel& model, const Matrix& features);

/// `passes` stochastic forward passes with independent dropout masks.
std::vector<Matrix> mc_dropout_proba(const TrainedModel& model, const Matrix& features, int passes,
                                     std::uint64_t seed);

/// Mean cross-entropy of `labels` under the model.
double mean_cross_entropy(const TrainedModel& model, const Matrix& features,
                          const std::vector<int>& labels);

/// Exact gradient of mean cross-entropy over the batch (dropout off).
Parameters loss_gradient(const TrainedModel& model, const Matrix& features,
                         const std::vector<int>& labels);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace real
