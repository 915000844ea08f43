#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "real/classifier.hpp"
#include "real/clustering.hpp"
#include "real/common.hpp"
#include "real/dataset.hpp"

namespace real {

enum class StrategyKind {
  Real,
  RealPool,
  RealUniform,
  RealCluster,
  RealEntropy,
  Entropy,
  Random,
  PlmKm,
  Badge,
  Bald,
  Cal,
  AcTune,
};

StrategyKind parse_strategy(const std::string& name);
std::string to_string(StrategyKind kind);
const std::vector<std::string>& strategy_names();

/// Where a selected index came from.
struct Provenance {
  enum class Source { ClusterError, Complement };
  Source source = Source::Complement;
  int cluster = -1;  // set for ClusterError
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Selected dataset indices (all in D_u, no duplicates) in selection order.
struct SampleSet {
  IndexList indices;
  std::vector<Provenance> provenance;
};

struct ClusterSummary {
  int cluster_id = 0;
  int majority_label = 0;
  IndexList pseudo_errors;  // positions within the scored rows
  double error_density = 0.0;
  int budget = 0;
};

struct StrategyParams {
  int budget = 1;
  int clusters = 25;
  int mc_passes = 10;
  int cal_neighbors = 10;
  double actune_beta = 1.0;
  std::uint64_t seed = 0;
};

inline constexpr int kDefaultClusters = 25;

// --- pseudo-error machinery -------------------------------------------------

/// Row-wise argmax, ties to the lower class.
std::vector<int> pseudo_label_instances(const Matrix& probs);

/// Most frequent pseudo label among `members`, ties to the lower class.
int cluster_majority(const std::vector<int>& pseudo, const IndexList& members, int num_classes);

/// 1 - p[majority].
double instance_error_score(const Eigen::Ref<const Eigen::RowVectorXd>& prob_row, int majority);

/// Majority label, pseudo-error set and error density for every cluster.
std::vector<ClusterSummary> cluster_error_density(const Matrix& probs, const std::vector<int>& pseudo,
                                                  const Clustering& clustering);

/// Fills b_k = floor(b * eps_k / sum eps), then hands the residual out one
/// slot each to the largest positive b_k (ties: larger eps_k, then lower id).
/// Returns the part of the budget left for the complement stage.
int allocate_budgets(std::vector<ClusterSummary>& summaries, int budget);

/// Shannon entropy in nats, 0 log 0 = 0.
double entropy_nats(const Eigen::Ref<const Eigen::RowVectorXd>& row);

/// Positions of the `k` largest scores, ties to the lower position.
IndexList top_k(const std::vector<double>& scores, std::size_t k);

// --- strategies -------------------------------------------------------------

enum class RealMode { Real, Pool, Uniform, Cluster, Entropy };

struct RealSelection {
  SampleSet sample;
  Clustering clustering;
  std::vector<ClusterSummary> clusters;
  std::vector<int> instance_majority;  // cluster majority label per D_u position
  int complement_budget = 0;
};

RealSelection real_select_detailed(const TrainedModel& model, const Dataset& data,
                                   const PoolState& pool, int budget, int clusters, RealMode mode,
                                   std::uint64_t seed);

SampleSet real_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                      int budget, int clusters, RealMode mode, std::uint64_t seed);
SampleSet entropy_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                         int budget);
SampleSet random_select(const PoolState& pool, int budget, std::uint64_t seed);
SampleSet plmkm_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                       int budget, std::uint64_t seed);

/// (p - onehot(argmax p)) outer Phi(x), flattened class-major.
Matrix badge_embeddings(const TrainedModel& model, const Matrix& features);
SampleSet badge_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                       int budget, std::uint64_t seed);

/// Mutual information H(mean p) - mean H(p) per row of a pass stack.
std::vector<double> bald_scores(const std::vector<Matrix>& passes);
SampleSet bald_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                      int budget, int passes, std::uint64_t seed);

/// Mean KL(neighbour || candidate) over the nearest labeled neighbours.
std::vector<double> cal_scores(const Matrix& candidate_embeddings, const Matrix& candidate_probs,
                               const Matrix& labeled_embeddings, const Matrix& labeled_probs,
                               int neighbors);
SampleSet cal_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                     int budget, int neighbors);

/// Per-cluster quotas proportional to `mass` (floor plus largest remainder).
std::vector<int> proportional_quotas(const std::vector<double>& mass, int budget);
SampleSet actune_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                        int budget, int clusters, double beta, std::uint64_t seed);

/// Dispatches by strategy kind.
SampleSet select(StrategyKind kind, const TrainedModel& model, const Dataset& data,
                 const PoolState& pool, const StrategyParams& params);

}  // namespace real
