#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "real/classifier.hpp"
#include "real/dataset.hpp"
#include "real/strategies.hpp"

namespace real {

/// Either a dataset file or a synthetic specification plus its seed.
struct DatasetSource {
  std::string name;
  std::string path;
  DatasetFormat format = DatasetFormat::Text;
  std::optional<SyntheticSpec> synthetic;
  std::uint64_t synthetic_seed = 0;

  Dataset materialize() const;
};

struct ExperimentConfig {
  DatasetSource dataset;
  std::string strategy = "real";
  int rounds = 8;
  int budget = 40;
  int warmup = 40;
  int validation = 200;
  int test = 400;
  int clusters = kDefaultClusters;
  ModelConfig model;
  int mc_passes = 10;
  int cal_neighbors = 10;
  double actune_beta = 1.0;
  std::uint64_t seed_data = 0;
  std::uint64_t seed_model = 0;
  std::uint64_t seed_strategy = 0;
  bool retrain_from_scratch = false;

  void validate() const;
};

struct RoundReport {
  int round = 0;
  double accuracy = 0.0;  // test set, before this round's acquisition
  double f1_macro = 0.0;
  double sample_error = 0.0;
  double pool_error = 0.0;
  std::optional<double> lift;
  double first_step_loss = 0.0;  // mean cross-entropy of Q before retraining
  std::optional<double> boundary_jsd;
  std::size_t n_labeled = 0;
  std::size_t n_unlabeled = 0;
  std::size_t n_selected = 0;
  double wall_seconds = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<RoundReport> rounds;
  double final_accuracy = 0.0;
  double final_f1_macro = 0.0;
  double mean_accuracy = 0.0;  // over the evaluations that follow each round's training
  double mean_f1_macro = 0.0;
  bool exhausted = false;
  double warmup_validation_accuracy = 0.0;
};

/// Observer invoked once per round with the state right after the commit;
/// used by audits and diagnostics.
struct RoundObserver {
  virtual ~RoundObserver() = default;
  virtual void on_round(int round, const PoolState& before, const PoolState& after,
                        const SampleSet& sample, const IndexList& trained_on) = 0;
};

/// Warm-up training followed by `rounds` acquire/label/retrain cycles.
/// Invariant violations throw InvariantViolation.
ExperimentReport run_experiment(const ExperimentConfig& config, const Dataset& data,
                                RoundObserver* observer = nullptr);
ExperimentReport run_experiment(const ExperimentConfig& config);

/// Model state after warm-up only, shared by every strategy for given seeds.
struct WarmupState {
  PoolState pool;
  TrainedModel model;
  TrainStats stats;
};
WarmupState warm_up(const ExperimentConfig& config, const Dataset& data);

std::vector<LabeledPair> labeled_pairs(const Dataset& data, const IndexList& indices);

}  // namespace real
