#include "real/alloop.hpp"

#include <algorithm>
#include <chrono>

#include "real/analysis.hpp"

namespace real {

namespace {

IndexList positions_in(const IndexList& sorted, const IndexList& indices) {
  IndexList out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), idx);
    if (it == sorted.end() || *it != idx) {
      throw InvariantViolation("selected index " + std::to_string(idx) + " is not in the unlabeled pool");
    }
    out.push_back(static_cast<std::size_t>(it - sorted.begin()));
  }
  return out;
}

void audit_sample(const PoolState& pool, const SampleSet& q, int budget) {
  const std::size_t want = std::min(static_cast<std::size_t>(budget), pool.unlabeled.size());
  if (q.indices.size() != want) {
    throw InvariantViolation("sample size " + std::to_string(q.indices.size()) + " != min(b, |D_u|) = " +
                             std::to_string(want));
  }
  IndexList sorted = q.indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvariantViolation("sample contains duplicates");
  }
  if (!std::includes(pool.unlabeled.begin(), pool.unlabeled.end(), sorted.begin(), sorted.end())) {
    throw InvariantViolation("sample is not a subset of the unlabeled pool");
  }
}

void audit_training(const PoolState& pool, const IndexList& trained_on) {
  for (std::size_t idx : trained_on) {
    if (std::binary_search(pool.test.begin(), pool.test.end(), idx) ||
        std::binary_search(pool.validation.begin(), pool.validation.end(), idx)) {
      throw InvariantViolation("held-out index " + std::to_string(idx) + " used for training");
    }
  }
}

struct Evaluation {
  double accuracy;
  double f1;
};

Evaluation evaluate(const TrainedModel& model, const Dataset& data, const IndexList& test) {
  if (test.empty()) return {0.0, 0.0};
  std::vector<int> truths;
  for (std::size_t i : test) truths.push_back(data.labels[i]);
  const auto pred = predict(model, gather_rows(data.features, test));
  return {accuracy(pred, truths), f1_macro(pred, truths, data.num_classes)};
}

}  // namespace

Dataset DatasetSource::materialize() const {
  Dataset data = synthetic ? generate_synthetic(*synthetic, synthetic_seed) : load_dataset(path, format);
  if (!name.empty()) data.name = name;
  data.validate();
  return data;
}

void ExperimentConfig::validate() const {
  parse_strategy(strategy);
  model.validate();
  if (rounds < 1) throw ContractError("experiment: rounds must be >= 1");
  if (budget < 1) throw ContractError("experiment: budget must be >= 1");
  if (warmup < 1 || validation < 0 || test < 0) throw ContractError("experiment: bad split sizes");
  if (clusters < 1) throw ContractError("experiment: clusters must be >= 1");
  const StrategyKind kind = parse_strategy(strategy);
  if (kind == StrategyKind::Bald &&
      (model.kind != ModelKind::Mlp || model.dropout_rate <= 0.0)) {
    throw ContractError("strategy bald requires --classifier mlp with --dropout > 0");
  }
  if (kind == StrategyKind::Bald && mc_passes < 2) throw ContractError("bald: mc passes must be >= 2");
  if (cal_neighbors < 1) throw ContractError("cal: neighbors must be >= 1");
}

std::vector<LabeledPair> labeled_pairs(const Dataset& data, const IndexList& indices) {
  std::vector<LabeledPair> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back({i, data.labels[i]});
  return out;
}

WarmupState warm_up(const ExperimentConfig& config, const Dataset& data) {
  config.validate();
  if (config.warmup < data.num_classes) {
    throw ContractError("experiment: warm-up size must be >= number of classes");
  }
  PoolState pool = split_pool(data, static_cast<std::size_t>(config.warmup),
                              static_cast<std::size_t>(config.validation),
                              static_cast<std::size_t>(config.test), config.seed_data);
  ModelConfig mc = config.model;
  mc.weight_init_seed = mix_seed(config.seed_model, 0);
  auto [model, stats] = train(mc, data, labeled_pairs(data, pool.labeled),
                              labeled_pairs(data, pool.validation), mc.warmup_epochs,
                              config.seed_model);
  return {std::move(pool), std::move(model), std::move(stats)};
}

ExperimentReport run_experiment(const ExperimentConfig& config, const Dataset& data,
                                RoundObserver* observer) {
  data.validate();
  WarmupState state = warm_up(config, data);
  PoolState& pool = state.pool;
  const std::size_t n = data.size();
  check_partition(pool, n);

  const StrategyKind kind = parse_strategy(config.strategy);
  const auto val_pairs = labeled_pairs(data, pool.validation);
  ModelConfig mc = config.model;
  mc.weight_init_seed = mix_seed(config.seed_model, 0);

  ExperimentReport report;
  report.config = config;
  report.warmup_validation_accuracy = state.stats.best_validation_accuracy;
  TrainedModel model = std::move(state.model);
  std::vector<double> post_round_acc, post_round_f1;

  for (int t = 1; t <= config.rounds; ++t) {
    if (pool.unlabeled.empty()) {
      report.exhausted = true;
      break;
    }
    const auto started = std::chrono::steady_clock::now();
    RoundReport round;
    round.round = t;
    const Evaluation before = evaluate(model, data, pool.test);
    round.accuracy = before.accuracy;
    round.f1_macro = before.f1;
    round.n_labeled = pool.labeled.size();
    round.n_unlabeled = pool.unlabeled.size();
    if (t > 1) {
      post_round_acc.push_back(before.accuracy);
      post_round_f1.push_back(before.f1);
    }

    StrategyParams params;
    params.budget = config.budget;
    params.clusters = config.clusters;
    params.mc_passes = config.mc_passes;
    params.cal_neighbors = config.cal_neighbors;
    params.actune_beta = config.actune_beta;
    params.seed = mix_seed(config.seed_strategy, static_cast<std::uint64_t>(t));
    const SampleSet q = select(kind, model, data, pool, params);
    audit_sample(pool, q, config.budget);
    round.n_selected = q.indices.size();

    // Diagnostics over D_u with ground truth revealed.
    const Matrix xu = gather_rows(data.features, pool.unlabeled);
    std::vector<int> truths;
    for (std::size_t i : pool.unlabeled) truths.push_back(data.labels[i]);
    const auto preds = predict(model, xu);
    const IndexList qpos = positions_in(pool.unlabeled, q.indices);
    const ErrorRates rates = error_rate_and_lift(preds, truths, qpos);
    round.sample_error = rates.sample_error;
    round.pool_error = rates.pool_error;
    round.lift = rates.lift;
    const Matrix emb = encode(model, xu);
    if (emb.rows() >= 2 && emb.cols() >= 2) {
      const Matrix proj = pca_project_2d(emb);
      round.boundary_jsd = grid_boundary_divergence(proj, truths, preds, qpos, data.num_classes).jsd;
    }

    const auto answers = oracle_label(pool, data, q.indices);
    std::vector<int> q_labels;
    for (const auto& a : answers) q_labels.push_back(a.label);
    round.first_step_loss = mean_cross_entropy(model, gather_rows(data.features, q.indices), q_labels);

    const PoolState before_commit = pool;
    commit_labels(pool, q.indices);
    check_partition(pool, n);
    if (pool.labeled.size() != before_commit.labeled.size() + q.indices.size()) {
      throw InvariantViolation("labeled set did not grow by |Q|");
    }
    audit_training(pool, pool.labeled);
    if (observer != nullptr) observer->on_round(t, before_commit, pool, q, pool.labeled);

    const int epochs = config.retrain_from_scratch ? mc.warmup_epochs : mc.round_epochs;
    std::optional<TrainedModel> warm;
    if (!config.retrain_from_scratch) warm = model;
    auto trained = train(mc, data, labeled_pairs(data, pool.labeled), val_pairs, epochs,
                         mix_seed(config.seed_model, static_cast<std::uint64_t>(t)), warm);
    model = std::move(trained.first);

    round.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    report.rounds.push_back(round);
    if (q.indices.size() < static_cast<std::size_t>(config.budget)) {
      report.exhausted = true;
      break;
    }
  }

  const Evaluation last = evaluate(model, data, pool.test);
  report.final_accuracy = last.accuracy;
  report.final_f1_macro = last.f1;
  post_round_acc.push_back(last.accuracy);
  post_round_f1.push_back(last.f1);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  report.mean_accuracy = mean(post_round_acc);
  report.mean_f1_macro = mean(post_round_f1);
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, config.dataset.materialize());
}

}  // namespace real
