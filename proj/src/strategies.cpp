#include "real/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace real {

namespace {

const std::vector<std::pair<std::string, StrategyKind>>& strategy_table() {
  static const std::vector<std::pair<std::string, StrategyKind>> table = {
      {"real", StrategyKind::Real},
      {"real-pool", StrategyKind::RealPool},
      {"real-uniform", StrategyKind::RealUniform},
      {"real-cluster", StrategyKind::RealCluster},
      {"real-entropy", StrategyKind::RealEntropy},
      {"entropy", StrategyKind::Entropy},
      {"random", StrategyKind::Random},
      {"plm-km", StrategyKind::PlmKm},
      {"badge", StrategyKind::Badge},
      {"bald", StrategyKind::Bald},
      {"cal", StrategyKind::Cal},
      {"actune", StrategyKind::AcTune},
  };
  return table;
}

std::size_t capped(int budget, const PoolState& pool) {
  if (budget < 1) throw ContractError("strategy: budget must be >= 1");
  if (pool.unlabeled.empty()) throw ContractError("strategy: unlabeled pool is empty");
  return std::min(static_cast<std::size_t>(budget), pool.unlabeled.size());
}

SampleSet from_positions(const PoolState& pool, const IndexList& positions) {
  SampleSet out;
  for (std::size_t pos : positions) {
    out.indices.push_back(pool.unlabeled[pos]);
    out.provenance.push_back({});
  }
  return out;
}

Matrix pool_features(const Dataset& data, const PoolState& pool) {
  return gather_rows(data.features, pool.unlabeled);
}

std::vector<double> row_entropies(const Matrix& probs) {
  std::vector<double> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) out[static_cast<std::size_t>(i)] = entropy_nats(probs.row(i));
  return out;
}

RealMode mode_of(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::RealPool: return RealMode::Pool;
    case StrategyKind::RealUniform: return RealMode::Uniform;
    case StrategyKind::RealCluster: return RealMode::Cluster;
    case StrategyKind::RealEntropy: return RealMode::Entropy;
    default: return RealMode::Real;
  }
}

}  // namespace

StrategyKind parse_strategy(const std::string& name) {
  for (const auto& [key, kind] : strategy_table()) {
    if (key == name) return kind;
  }
  throw ContractError("unknown strategy '" + name + "'");
}

std::string to_string(StrategyKind kind) {
  for (const auto& [key, k] : strategy_table()) {
    if (k == kind) return key;
  }
  return "unknown";
}

const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : strategy_table()) out.push_back(entry.first);
    return out;
  }();
  return names;
}

std::vector<int> pseudo_label_instances(const Matrix& probs) {
  if (probs.rows() == 0 || probs.cols() == 0) throw ContractError("pseudo labels: empty probability matrix");
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

int cluster_majority(const std::vector<int>& pseudo, const IndexList& members, int num_classes) {
  if (members.empty()) throw ContractError("cluster majority: empty cluster");
  std::vector<std::size_t> votes(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t m : members) {
    const int y = pseudo.at(m);
    if (y < 0 || y >= num_classes) throw ContractError("cluster majority: label out of range");
    ++votes[static_cast<std::size_t>(y)];
  }
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

double instance_error_score(const Eigen::Ref<const Eigen::RowVectorXd>& prob_row, int majority) {
  if (majority < 0 || majority >= prob_row.size()) throw ContractError("error score: class out of range");
  return 1.0 - prob_row(majority);
}

std::vector<ClusterSummary> cluster_error_density(const Matrix& probs, const std::vector<int>& pseudo,
                                                  const Clustering& clustering) {
  if (clustering.assignments.size() != static_cast<std::size_t>(probs.rows()) ||
      pseudo.size() != clustering.assignments.size()) {
    throw ContractError("error density: clustering does not cover the scored rows");
  }
  const int y = static_cast<int>(probs.cols());
  std::vector<ClusterSummary> out;
  const auto members = clustering.members();
  for (int k = 0; k < clustering.k; ++k) {
    ClusterSummary s;
    s.cluster_id = k;
    const auto& cluster = members[static_cast<std::size_t>(k)];
    if (cluster.empty()) {
      out.push_back(s);
      continue;
    }
    s.majority_label = cluster_majority(pseudo, cluster, y);
    for (std::size_t m : cluster) {
      if (pseudo[m] == s.majority_label) continue;
      s.pseudo_errors.push_back(m);
      s.error_density += instance_error_score(probs.row(static_cast<Eigen::Index>(m)), s.majority_label);
    }
    out.push_back(std::move(s));
  }
  return out;
}

int allocate_budgets(std::vector<ClusterSummary>& summaries, int budget) {
  if (budget < 0) throw ContractError("allocate: budget must be >= 0");
  double total = 0.0;
  for (const auto& s : summaries) total += s.error_density;
  for (auto& s : summaries) s.budget = 0;
  if (!(total > 0.0)) return budget;

  int assigned = 0;
  for (auto& s : summaries) {
    s.budget = static_cast<int>(std::floor(static_cast<double>(budget) * s.error_density / total));
    assigned += s.budget;
  }
  int residual = budget - assigned;

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    if (summaries[i].budget > 0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = summaries[a];
    const auto& sb = summaries[b];
    if (sa.budget != sb.budget) return sa.budget > sb.budget;
    if (sa.error_density != sb.error_density) return sa.error_density > sb.error_density;
    return sa.cluster_id < sb.cluster_id;
  });
  for (std::size_t r = 0; r < order.size() && residual > 0; ++r, --residual) {
    ++summaries[order[r]].budget;
  }
  return residual;
}

double entropy_nats(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (row(j) > 0.0) h -= row(j) * std::log(row(j));
  }
  return h;
}

IndexList top_k(const std::vector<double>& scores, std::size_t k) {
  IndexList order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(k);
  return order;
}

RealSelection real_select_detailed(const TrainedModel& model, const Dataset& data,
                                   const PoolState& pool, int budget, int clusters, RealMode mode,
                                   std::uint64_t seed) {
  const std::size_t want = capped(budget, pool);
  if (clusters < 1) throw ContractError("real: number of clusters must be >= 1");
  const Matrix x = pool_features(data, pool);
  const Matrix probs = predict_proba(model, x);
  const Matrix emb = encode(model, x);
  const std::size_t n = pool.unlabeled.size();

  RealSelection out;
  out.clustering = kmeans(emb, clusters, mix_seed(seed, 1));
  const auto pseudo = pseudo_label_instances(probs);
  out.clusters = cluster_error_density(probs, pseudo, out.clustering);
  out.instance_majority.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.instance_majority[i] =
        out.clusters[static_cast<std::size_t>(out.clustering.assignments[i])].majority_label;
  }
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    score[i] = instance_error_score(probs.row(static_cast<Eigen::Index>(i)), out.instance_majority[i]);
  }

  std::vector<char> chosen(n, 0);
  auto pick = [&](std::size_t pos, Provenance prov) {
    chosen[pos] = 1;
    out.sample.indices.push_back(pool.unlabeled[pos]);
    out.sample.provenance.push_back(prov);
  };

  if (mode == RealMode::Pool) {
    for (std::size_t pos : top_k(score, want)) {
      const int k = out.clustering.assignments[pos];
      const bool err = pseudo[pos] != out.instance_majority[pos];
      pick(pos, err ? Provenance{Provenance::Source::ClusterError, k} : Provenance{});
    }
    out.complement_budget = 0;
    return out;
  }

  if (mode == RealMode::Uniform) {
    const int per = static_cast<int>(want) / out.clustering.k;
    for (auto& s : out.clusters) s.budget = per;
    out.complement_budget = static_cast<int>(want) - per * out.clustering.k;
  } else {
    out.complement_budget = allocate_budgets(out.clusters, static_cast<int>(want));
  }

  const std::vector<double> ent = mode == RealMode::Entropy ? row_entropies(probs) : std::vector<double>{};
  std::mt19937_64 rng(mix_seed(seed, 2));
  for (const auto& s : out.clusters) {
    const std::size_t take = std::min<std::size_t>(s.pseudo_errors.size(), static_cast<std::size_t>(s.budget));
    if (take == 0) continue;
    IndexList picks;
    if (mode == RealMode::Real || mode == RealMode::Uniform) {
      std::sample(s.pseudo_errors.begin(), s.pseudo_errors.end(), std::back_inserter(picks),
                  static_cast<std::ptrdiff_t>(take), rng);
    } else {
      std::vector<double> local;
      for (std::size_t pos : s.pseudo_errors) local.push_back(mode == RealMode::Cluster ? score[pos] : ent[pos]);
      for (std::size_t j : top_k(local, take)) picks.push_back(s.pseudo_errors[j]);
    }
    for (std::size_t pos : picks) pick(pos, {Provenance::Source::ClusterError, s.cluster_id});
  }

  if (out.sample.indices.size() < want) {
    std::vector<double> rest = score;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) rest[i] = -std::numeric_limits<double>::infinity();
    }
    for (std::size_t pos : top_k(rest, want - out.sample.indices.size())) pick(pos, {});
  }
  return out;
}

SampleSet real_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                      int budget, int clusters, RealMode mode, std::uint64_t seed) {
  return real_select_detailed(model, data, pool, budget, clusters, mode, seed).sample;
}

SampleSet entropy_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                         int budget) {
  const std::size_t want = capped(budget, pool);
  const Matrix probs = predict_proba(model, pool_features(data, pool));
  return from_positions(pool, top_k(row_entropies(probs), want));
}

SampleSet random_select(const PoolState& pool, int budget, std::uint64_t seed) {
  const std::size_t want = capped(budget, pool);
  std::mt19937_64 rng(seed);
  IndexList positions(pool.unlabeled.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  std::shuffle(positions.begin(), positions.end(), rng);
  positions.resize(want);
  return from_positions(pool, positions);
}

SampleSet plmkm_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                       int budget, std::uint64_t seed) {
  const std::size_t want = capped(budget, pool);
  const Matrix emb = encode(model, pool_features(data, pool));
  const Clustering c = kmeans(emb, static_cast<int>(want), seed);
  const std::size_t n = pool.unlabeled.size();
  std::vector<char> used(n, 0);
  IndexList positions;
  for (Eigen::Index k = 0; k < c.centers.rows(); ++k) {
    std::vector<double> neg(n);
    for (std::size_t i = 0; i < n; ++i) {
      neg[i] = used[i] ? -std::numeric_limits<double>::infinity()
                       : -(emb.row(static_cast<Eigen::Index>(i)) - c.centers.row(k)).squaredNorm();
    }
    const std::size_t best = top_k(neg, 1).front();
    used[best] = 1;
    positions.push_back(best);
  }
  return from_positions(pool, positions);
}

Matrix badge_embeddings(const TrainedModel& model, const Matrix& features) {
  const Matrix probs = predict_proba(model, features);
  const Matrix emb = encode(model, features);
  const auto pred = pseudo_label_instances(probs);
  const Eigen::Index y = probs.cols();
  const Eigen::Index h = emb.cols();
  Matrix out(features.rows(), y * h);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index c = 0; c < y; ++c) {
      const double g = probs(i, c) - (c == pred[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
      out.block(i, c * h, 1, h) = g * emb.row(i);
    }
  }
  return out;
}

SampleSet badge_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                       int budget, std::uint64_t seed) {
  const std::size_t want = capped(budget, pool);
  const Matrix g = badge_embeddings(model, pool_features(data, pool));
  return from_positions(pool, kmeanspp_seed_indices(g, static_cast<int>(want), seed));
}

std::vector<double> bald_scores(const std::vector<Matrix>& passes) {
  if (passes.empty()) throw ContractError("bald: empty pass stack");
  Matrix mean = Matrix::Zero(passes.front().rows(), passes.front().cols());
  std::vector<double> expected(static_cast<std::size_t>(mean.rows()), 0.0);
  for (const auto& p : passes) {
    mean += p;
    for (Eigen::Index i = 0; i < p.rows(); ++i) expected[static_cast<std::size_t>(i)] += entropy_nats(p.row(i));
  }
  const auto t = static_cast<double>(passes.size());
  mean /= t;
  std::vector<double> out(expected.size());
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    const auto ii = static_cast<std::size_t>(i);
    out[ii] = entropy_nats(mean.row(i)) - expected[ii] / t;
  }
  return out;
}

SampleSet bald_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                      int budget, int passes, std::uint64_t seed) {
  const std::size_t want = capped(budget, pool);
  const auto stack = mc_dropout_proba(model, pool_features(data, pool), passes, seed);
  return from_positions(pool, top_k(bald_scores(stack), want));
}

std::vector<double> cal_scores(const Matrix& candidate_embeddings, const Matrix& candidate_probs,
                               const Matrix& labeled_embeddings, const Matrix& labeled_probs,
                               int neighbors) {
  if (labeled_embeddings.rows() == 0) throw ContractError("cal: labeled set is empty");
  if (neighbors < 1) throw ContractError("cal: neighbors must be >= 1");
  constexpr double kFloor = 1e-12;
  const auto n_lab = static_cast<std::size_t>(labeled_embeddings.rows());
  const std::size_t k = std::min(static_cast<std::size_t>(neighbors), n_lab);
  std::vector<double> out(static_cast<std::size_t>(candidate_embeddings.rows()));
  std::vector<double> neg(n_lab);
  for (Eigen::Index i = 0; i < candidate_embeddings.rows(); ++i) {
    for (std::size_t j = 0; j < n_lab; ++j) {
      neg[j] = -(candidate_embeddings.row(i) - labeled_embeddings.row(static_cast<Eigen::Index>(j))).squaredNorm();
    }
    double total = 0.0;
    for (std::size_t j : top_k(neg, k)) {
      const auto pn = labeled_probs.row(static_cast<Eigen::Index>(j));
      for (Eigen::Index c = 0; c < pn.size(); ++c) {
        if (pn(c) <= 0.0) continue;
        total += pn(c) * std::log(pn(c) / std::max(candidate_probs(i, c), kFloor));
      }
    }
    out[static_cast<std::size_t>(i)] = std::max(0.0, total / static_cast<double>(k));
  }
  return out;
}

SampleSet cal_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                     int budget, int neighbors) {
  const std::size_t want = capped(budget, pool);
  const Matrix xu = pool_features(data, pool);
  const Matrix xl = gather_rows(data.features, pool.labeled);
  const auto scores = cal_scores(encode(model, xu), predict_proba(model, xu), encode(model, xl),
                                 predict_proba(model, xl), neighbors);
  return from_positions(pool, top_k(scores, want));
}

std::vector<int> proportional_quotas(const std::vector<double>& mass, int budget) {
  std::vector<int> quota(mass.size(), 0);
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (!(total > 0.0) || mass.empty()) return quota;
  std::vector<double> remainder(mass.size());
  int assigned = 0;
  for (std::size_t k = 0; k < mass.size(); ++k) {
    const double share = static_cast<double>(budget) * mass[k] / total;
    quota[k] = static_cast<int>(std::floor(share));
    remainder[k] = share - quota[k];
    assigned += quota[k];
  }
  for (std::size_t k : top_k(remainder, static_cast<std::size_t>(budget - assigned))) ++quota[k];
  return quota;
}

SampleSet actune_select(const TrainedModel& model, const Dataset& data, const PoolState& pool,
                        int budget, int clusters, double beta, std::uint64_t seed) {
  const std::size_t want = capped(budget, pool);
  if (clusters < 1) throw ContractError("actune: number of clusters must be >= 1");
  const Matrix x = pool_features(data, pool);
  const Matrix emb = encode(model, x);
  const auto ent = row_entropies(predict_proba(model, x));
  std::vector<double> weight(ent.size());
  for (std::size_t i = 0; i < ent.size(); ++i) weight[i] = std::pow(ent[i], beta);

  const Clustering c = kmeans(emb, clusters, seed, weight);
  const auto members = c.members();
  std::vector<double> mass(members.size(), 0.0);
  for (std::size_t k = 0; k < members.size(); ++k) {
    for (std::size_t m : members[k]) mass[k] += weight[m];
  }
  if (std::accumulate(mass.begin(), mass.end(), 0.0) <= 0.0) {
    for (std::size_t k = 0; k < members.size(); ++k) mass[k] = static_cast<double>(members[k].size());
  }
  const auto quota = proportional_quotas(mass, static_cast<int>(want));

  std::vector<char> chosen(ent.size(), 0);
  IndexList positions;
  for (std::size_t k = 0; k < members.size(); ++k) {
    std::vector<double> local;
    for (std::size_t m : members[k]) local.push_back(ent[m]);
    for (std::size_t j : top_k(local, static_cast<std::size_t>(quota[k]))) {
      positions.push_back(members[k][j]);
      chosen[members[k][j]] = 1;
    }
  }
  // Quotas beyond a cluster's size spill over to the most uncertain leftovers.
  if (positions.size() < want) {
    std::vector<double> rest = ent;
    for (std::size_t i = 0; i < rest.size(); ++i) {
      if (chosen[i]) rest[i] = -std::numeric_limits<double>::infinity();
    }
    for (std::size_t pos : top_k(rest, want - positions.size())) positions.push_back(pos);
  }
  return from_positions(pool, positions);
}

SampleSet select(StrategyKind kind, const TrainedModel& model, const Dataset& data,
                 const PoolState& pool, const StrategyParams& params) {
  switch (kind) {
    case StrategyKind::Real:
    case StrategyKind::RealPool:
    case StrategyKind::RealUniform:
    case StrategyKind::RealCluster:
    case StrategyKind::RealEntropy:
      return real_select(model, data, pool, params.budget, params.clusters, mode_of(kind), params.seed);
    case StrategyKind::Entropy: return entropy_select(model, data, pool, params.budget);
    case StrategyKind::Random: return random_select(pool, params.budget, params.seed);
    case StrategyKind::PlmKm: return plmkm_select(model, data, pool, params.budget, params.seed);
    case StrategyKind::Badge: return badge_select(model, data, pool, params.budget, params.seed);
    case StrategyKind::Bald:
      return bald_select(model, data, pool, params.budget, params.mc_passes, params.seed);
    case StrategyKind::Cal: return cal_select(model, data, pool, params.budget, params.cal_neighbors);
    case StrategyKind::AcTune:
      return actune_select(model, data, pool, params.budget, params.clusters, params.actune_beta,
                           params.seed);
  }
  throw ContractError("unknown strategy kind");
}

}  // namespace real
