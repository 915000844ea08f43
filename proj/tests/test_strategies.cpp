#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "real/strategies.hpp"
#include "test_helpers.hpp"

using namespace real;

namespace {

Eigen::RowVectorXd row(std::initializer_list<double> v) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

PoolState all_unlabeled(std::size_t n) {
  PoolState pool;
  for (std::size_t i = 0; i < n; ++i) pool.unlabeled.push_back(i);
  return pool;
}

// Softmax model on 1-d input with logits (x, -x): class 0 iff x > 0, and
// confidence grows with |x|.
TrainedModel sign_model() {
  Parameters p{{Matrix::Zero(2, 1), Vector::Zero(2)}};
  p[0].weight(0, 0) = 1.0;
  p[0].weight(1, 0) = -1.0;
  return TrainedModel(ModelConfig{}, 2, p);
}

Dataset line_dataset(const std::vector<double>& xs) {
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) d.features(static_cast<Eigen::Index>(i), 0) = xs[i];
  d.labels.assign(xs.size(), 0);
  d.labels[0] = 1;
  d.num_classes = 2;
  return d;
}

TrainedModel random_softmax(std::size_t d, int y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.5);
  Parameters p{{Matrix(y, static_cast<Eigen::Index>(d)), Vector(y)}};
  for (Eigen::Index i = 0; i < p[0].weight.size(); ++i) p[0].weight.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < y; ++i) p[0].bias(i) = g(rng);
  return TrainedModel(ModelConfig{}, y, p);
}

std::vector<ClusterSummary> with_densities(const std::vector<double>& eps) {
  std::vector<ClusterSummary> out;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    ClusterSummary s;
    s.cluster_id = static_cast<int>(k);
    s.error_density = eps[k];
    out.push_back(s);
  }
  return out;
}

std::vector<int> budgets_of(const std::vector<ClusterSummary>& s) {
  std::vector<int> out;
  for (const auto& c : s) out.push_back(c.budget);
  return out;
}

}  // namespace

TEST_CASE("strategy names round-trip") {
  CHECK(strategy_names().size() == 12);
  for (const auto& name : strategy_names()) CHECK(to_string(parse_strategy(name)) == name);
  CHECK_THROWS_AS(parse_strategy("coreset"), ContractError);
}

TEST_CASE("pseudo labels are row argmaxes with ties to the lower class") {
  Matrix p(3, 3);
  p << 0.2, 0.5, 0.3, 0.4, 0.4, 0.2, 0.0, 0.0, 1.0;
  CHECK(pseudo_label_instances(p) == std::vector<int>{1, 0, 2});
  CHECK(pseudo_label_instances(Matrix::Identity(4, 4)) == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(pseudo_label_instances(Matrix(0, 2)), ContractError);
}

TEST_CASE("cluster majority counts votes with ties to the lower class") {
  CHECK(cluster_majority({1, 1, 2}, {0, 1, 2}, 3) == 1);
  CHECK(cluster_majority({0, 1}, {0, 1}, 2) == 0);
  CHECK(cluster_majority({0, 0, 3}, {2}, 4) == 3);
  CHECK_THROWS_AS(cluster_majority({0}, {}, 2), ContractError);
}

TEST_CASE("instance error score is one minus the majority probability") {
  CHECK(instance_error_score(row({0.0, 1.0}), 1) == 0.0);
  CHECK(instance_error_score(row({0.2, 0.5, 0.3}), 0) == doctest::Approx(0.8));
  CHECK(instance_error_score(row({0.25, 0.25, 0.25, 0.25}), 2) == doctest::Approx(0.75));
  CHECK_THROWS_AS(instance_error_score(row({0.5, 0.5}), 2), ContractError);
}

TEST_CASE("cluster error density sums the scores of pseudo errors") {
  // One cluster, majority 0 (three votes), two pseudo errors scoring 0.8 and 0.6.
  Matrix p(5, 2);
  p << 0.9, 0.1, 0.7, 0.3, 0.6, 0.4, 0.2, 0.8, 0.4, 0.6;
  Clustering c;
  c.k = 2;
  c.assignments = {0, 0, 0, 0, 0};
  c.centers = Matrix::Zero(2, 1);
  std::vector<ClusterSummary> s = cluster_error_density(p, pseudo_label_instances(p), c);
  REQUIRE(s.size() == 2);
  CHECK(s[0].majority_label == 0);
  CHECK(s[0].pseudo_errors == IndexList{3, 4});
  CHECK(s[0].error_density == doctest::Approx(1.4));
  CHECK(s[1].pseudo_errors.empty());
  CHECK(s[1].error_density == 0.0);

  c.assignments = {0, 0, 0, 1, 1};
  s = cluster_error_density(p, pseudo_label_instances(p), c);
  CHECK(s[0].error_density == 0.0);
  CHECK(s[1].error_density == 0.0);
}

TEST_CASE("allocate_budgets follows the worked examples") {
  auto s = with_densities({2.0, 1.0, 1.0});
  CHECK(allocate_budgets(s, 8) == 0);
  CHECK(budgets_of(s) == std::vector<int>{4, 2, 2});

  s = with_densities({1.0, 1.0, 1.0});
  CHECK(allocate_budgets(s, 10) == 0);
  CHECK(budgets_of(s) == std::vector<int>{4, 3, 3});

  s = with_densities({0.0, 0.0});
  CHECK(allocate_budgets(s, 5) == 5);
  CHECK(budgets_of(s) == std::vector<int>{0, 0});

  // only one positive floor: the rest of the residual goes to the complement
  s = with_densities({1.0, 0.01, 0.01});
  CHECK(allocate_budgets(s, 3) == 0);
  CHECK(budgets_of(s) == std::vector<int>{3, 0, 0});
  s = with_densities({1.0, 0.3, 0.3});
  CHECK(allocate_budgets(s, 3) == 1);
  CHECK(budgets_of(s) == std::vector<int>{2, 0, 0});
}

TEST_CASE("allocate_budgets matches the integer oracle and is scale invariant") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = std::uniform_int_distribution<int>(1, 6)(rng);
    const int b = std::uniform_int_distribution<int>(0, 60)(rng);
    std::vector<long long> w(static_cast<std::size_t>(k));
    std::vector<double> eps;
    for (auto& x : w) {
      x = std::uniform_int_distribution<int>(0, 4)(rng) == 0 ? 0 : std::uniform_int_distribution<int>(1, 64)(rng);
      eps.push_back(static_cast<double>(x) / 8.0);
    }
    auto s = with_densities(eps);
    const int left = allocate_budgets(s, b);
    const auto expect = oracle::allocate(w, b);
    std::vector<int> got = budgets_of(s);
    got.push_back(left);
    CHECK(std::vector<long long>(got.begin(), got.end()) == expect);

    int sum = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      sum += s[i].budget;
      if (eps[i] == 0.0) CHECK(s[i].budget == 0);
    }
    CHECK(sum + left == b);

    for (double scale : {0.25, 4.0, 1024.0}) {
      std::vector<double> scaled;
      for (double e : eps) scaled.push_back(e * scale);
      auto t = with_densities(scaled);
      CHECK(allocate_budgets(t, b) == left);
      CHECK(budgets_of(t) == budgets_of(s));
    }
  }
}

TEST_CASE("entropy and top_k follow the tie rules") {
  CHECK(entropy_nats(row({0.5, 0.5})) == doctest::Approx(0.69314718055994531));
  CHECK(entropy_nats(row({1.0, 0.0})) == 0.0);
  CHECK(top_k({0.1, 0.5, 0.5, 0.2}, 2) == IndexList{1, 2});
  CHECK(top_k({0.0, 0.0, 0.0}, 2) == IndexList{0, 1});
  CHECK(top_k({1.0}, 5) == IndexList{0});
}

TEST_CASE("a minority inside a cluster is sampled when its budget covers it") {
  // Five confident class-0 points (circles) and two class-1 points
  // (triangles) in a single cluster.
  const Dataset data = line_dataset({3.0, 2.0, -1.0, 2.5, 4.0, -0.5, 1.5});
  const PoolState pool = all_unlabeled(7);
  const RealSelection sel = real_select_detailed(sign_model(), data, pool, 2, 1, RealMode::Real, 4);
  REQUIRE(sel.clusters.size() == 1);
  CHECK(sel.clusters[0].majority_label == 0);
  CHECK(sel.clusters[0].budget == 2);
  CHECK(std::set<std::size_t>(sel.sample.indices.begin(), sel.sample.indices.end()) == std::set<std::size_t>{2, 5});
  for (const auto& p : sel.sample.provenance) CHECK(p == Provenance{Provenance::Source::ClusterError, 0});
}

TEST_CASE("with no pseudo errors the complement takes the highest scores") {
  const Dataset data = line_dataset({3.0, 0.2, 2.0, 0.1, 5.0, 0.3, 1.0});
  const PoolState pool = all_unlabeled(7);
  for (int k : {1, 2, 3}) {
    const RealSelection sel = real_select_detailed(sign_model(), data, pool, 3, k, RealMode::Real, 1);
    CHECK(sel.complement_budget == 3);
    CHECK(sel.sample.indices == IndexList{3, 1, 5});
    for (const auto& p : sel.sample.provenance) CHECK(p.source == Provenance::Source::Complement);
  }
}

TEST_CASE("real budgets agree with a direct evaluation on small pools") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const std::size_t n = 8 + seed % 23;  // up to 30
    const int k = 1 + static_cast<int>(seed % 4);
    const Dataset data = testing::random_dataset(n, 3, 3, seed);
    const TrainedModel model = random_softmax(3, 3, seed + 7);
    const PoolState pool = all_unlabeled(n);
    const int b = 1 + static_cast<int>(seed % 8);
    const RealSelection sel = real_select_detailed(model, data, pool, b, k, RealMode::Real, seed);

    // Direct evaluation from the returned clustering.
    const Matrix p = predict_proba(model, data.features);
    std::vector<double> eps(static_cast<std::size_t>(sel.clustering.k), 0.0);
    for (int c = 0; c < sel.clustering.k; ++c) {
      std::vector<int> votes(3, 0);
      std::vector<int> pred(n);
      for (std::size_t i = 0; i < n; ++i) {
        Eigen::Index a = 0;
        p.row(static_cast<Eigen::Index>(i)).maxCoeff(&a);
        pred[i] = static_cast<int>(a);
        if (sel.clustering.assignments[i] == c) ++votes[static_cast<std::size_t>(a)];
      }
      int maj = 0;
      for (int y = 1; y < 3; ++y) maj = votes[static_cast<std::size_t>(y)] > votes[static_cast<std::size_t>(maj)] ? y : maj;
      for (std::size_t i = 0; i < n; ++i) {
        if (sel.clustering.assignments[i] == c && pred[i] != maj) eps[static_cast<std::size_t>(c)] += 1.0 - p(static_cast<Eigen::Index>(i), maj);
      }
      CHECK(sel.clusters[static_cast<std::size_t>(c)].error_density == doctest::Approx(eps[static_cast<std::size_t>(c)]).epsilon(1e-12));
    }
    std::vector<int> floors;
    double total = 0.0;
    for (double e : eps) total += e;
    int assigned = 0;
    for (double e : eps) {
      floors.push_back(total > 0.0 ? static_cast<int>(std::floor(b * e / total)) : 0);
      assigned += floors.back();
    }
    // residual: +1 to the largest positive floors, then larger eps, then lower id
    std::vector<int> expect = floors;
    std::vector<int> order;
    for (int c = 0; c < sel.clustering.k; ++c) {
      if (floors[static_cast<std::size_t>(c)] > 0) order.push_back(c);
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int c) {
      if (floors[static_cast<std::size_t>(a)] != floors[static_cast<std::size_t>(c)]) return floors[static_cast<std::size_t>(a)] > floors[static_cast<std::size_t>(c)];
      return eps[static_cast<std::size_t>(a)] > eps[static_cast<std::size_t>(c)];
    });
    int residual = total > 0.0 ? b - assigned : b;
    for (int c : order) {
      if (residual == 0) break;
      ++expect[static_cast<std::size_t>(c)];
      --residual;
    }
    std::vector<int> got;
    for (const auto& s : sel.clusters) got.push_back(s.budget);
    CHECK(got == expect);
    CHECK(sel.complement_budget == residual);
  }
}

TEST_CASE("cluster-error picks are pseudo errors of their cluster") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Dataset data = testing::random_dataset(60, 4, 3, seed);
    const TrainedModel model = random_softmax(4, 3, seed);
    for (RealMode mode : {RealMode::Real, RealMode::Uniform, RealMode::Cluster, RealMode::Entropy}) {
      const RealSelection sel = real_select_detailed(model, data, all_unlabeled(60), 12, 4, mode, seed);
      bool covered = sel.complement_budget == 0;
      for (const auto& s : sel.clusters) covered = covered && s.pseudo_errors.size() >= static_cast<std::size_t>(s.budget);
      for (std::size_t q = 0; q < sel.sample.indices.size(); ++q) {
        const auto& prov = sel.sample.provenance[q];
        if (prov.source == Provenance::Source::ClusterError) {
          const auto& errs = sel.clusters[static_cast<std::size_t>(prov.cluster)].pseudo_errors;
          CHECK(std::find(errs.begin(), errs.end(), sel.sample.indices[q]) != errs.end());
        } else if (covered) {
          FAIL("complement pick although every cluster covered its budget");
        }
      }
    }
  }
}

TEST_CASE("every strategy returns min(b, |D_u|) distinct pool members") {
  const Dataset data = generate_synthetic(SyntheticSpec{3, 4, 40, 3.0, 1.0, 0.1}, 2);
  ModelConfig cfg;
  cfg.kind = ModelKind::Mlp;
  cfg.hidden_dim = 8;
  cfg.dropout_rate = 0.2;
  cfg.learning_rate = kMlpDefaultLearningRate;
  PoolState pool = split_pool(data, 9, 10, 10, 3);
  std::vector<LabeledPair> lab;
  for (std::size_t i : pool.labeled) lab.push_back({i, data.labels[i]});
  const auto [model, stats] = train(cfg, data, lab, {}, 3, 1);
  for (int b : {1, 7, 40, 200}) {
    for (const auto& name : strategy_names()) {
      StrategyParams params;
      params.budget = b;
      params.clusters = 5;
      params.seed = 3;
      const SampleSet q = select(parse_strategy(name), model, data, pool, params);
      const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(b), pool.unlabeled.size());
      CHECK_MESSAGE(q.indices.size() == want, name);
      CHECK(q.provenance.size() == q.indices.size());
      CHECK(std::set<std::size_t>(q.indices.begin(), q.indices.end()).size() == q.indices.size());
      for (std::size_t i : q.indices) {
        CHECK(std::binary_search(pool.unlabeled.begin(), pool.unlabeled.end(), i));
      }
      // determinism
      CHECK(select(parse_strategy(name), model, data, pool, params).indices == q.indices);
    }
  }
}

TEST_CASE("entropy selection examples") {
  Dataset data = line_dataset({0.0, 1.1, 100.0});
  const SampleSet q = entropy_select(sign_model(), data, all_unlabeled(3), 1);
  CHECK(q.indices == IndexList{0});
  CHECK(entropy_select(sign_model(), data, all_unlabeled(3), 3).indices.size() == 3);

  // identical confident rows: ties go to the lowest indices
  data = line_dataset({50.0, 50.0, 50.0, 50.0});
  CHECK(entropy_select(sign_model(), data, all_unlabeled(4), 2).indices == IndexList{0, 1});
}

TEST_CASE("random selection is uniform over the pool") {
  const PoolState pool = all_unlabeled(10);
  const SampleSet all = random_select(pool, 10, 1);
  CHECK(std::set<std::size_t>(all.indices.begin(), all.indices.end()).size() == 10);
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) hits += random_select(pool, 1, seed).indices[0] == 3 ? 1 : 0;
  CHECK(std::abs(hits / 10000.0 - 0.1) <= 0.01);
}

TEST_CASE("plm-km picks one representative per blob") {
  std::vector<double> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(-10.0 - 0.1 * i);
  for (int i = 0; i < 6; ++i) xs.push_back(10.0 + 0.1 * i);
  const Dataset data = line_dataset(xs);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SampleSet q = plmkm_select(sign_model(), data, all_unlabeled(12), 2, seed);
    REQUIRE(q.indices.size() == 2);
    CHECK((q.indices[0] < 6) != (q.indices[1] < 6));
  }
  CHECK(plmkm_select(sign_model(), data, all_unlabeled(12), 12, 0).indices.size() == 12);
}

TEST_CASE("badge embeddings equal the last-layer gradient under the predicted label") {
  ModelConfig cfg;
  cfg.kind = ModelKind::Mlp;
  cfg.hidden_dim = 4;
  cfg.weight_init_seed = 5;
  TrainedModel model = TrainedModel::initialize(cfg, 3, 3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& layer : model.mutable_parameters()) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = g(rng);
  }
  const Dataset data = testing::random_dataset(6, 3, 3, 2);
  const Matrix emb = badge_embeddings(model, data.features);
  const auto pred = predict(model, data.features);
  for (Eigen::Index i = 0; i < 6; ++i) {
    const Parameters grad = loss_gradient(model, data.features.row(i), {pred[static_cast<std::size_t>(i)]});
    const Matrix& w = grad.back().weight;  // classes x hidden
    for (Eigen::Index c = 0; c < 3; ++c) {
      for (Eigen::Index h = 0; h < 4; ++h) CHECK(emb(i, c * 4 + h) == doctest::Approx(w(c, h)).epsilon(1e-12));
    }
  }

  // confident one-hot prediction gives a zero embedding
  Parameters p{{Matrix::Zero(2, 1), Vector::Zero(2)}};
  p[0].bias(0) = 800.0;
  const Matrix z = badge_embeddings(TrainedModel(ModelConfig{}, 2, p), Matrix::Ones(2, 1));
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bald scores") {
  Matrix a(1, 2), b(1, 2);
  a << 1.0, 0.0;
  b << 0.0, 1.0;
  CHECK(bald_scores({a, b})[0] == doctest::Approx(0.69314718055994531));
  CHECK(bald_scores({a, a, a})[0] == doctest::Approx(0.0));

  std::mt19937_64 rng(3);
  std::gamma_distribution<double> gamma(0.5, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Matrix> stack;
    for (int t = 0; t < 5; ++t) {
      Matrix m(4, 3);
      for (Eigen::Index i = 0; i < 4; ++i) {
        for (Eigen::Index c = 0; c < 3; ++c) m(i, c) = gamma(rng) + 1e-12;
        m.row(i) /= m.row(i).sum();
      }
      stack.push_back(m);
    }
    for (double s : bald_scores(stack)) CHECK(s >= -1e-12);
  }
}

TEST_CASE("cal scores are zero for agreement and grow with divergence") {
  Matrix emb(1, 2);
  emb << 0.0, 0.0;
  Matrix lab_emb(3, 2);
  lab_emb << 1.0, 0.0, 0.0, 1.0, 5.0, 5.0;
  Matrix p(3, 3);
  p << 0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5;
  CHECK(cal_scores(emb, p.topRows(1), lab_emb, p, 2)[0] == doctest::Approx(0.0));

  const Eigen::RowVector3d far(0.9, 0.05, 0.05);
  double prev = 0.0;
  for (int step = 1; step <= 20; ++step) {
    const double t = step / 20.0;
    const Matrix cand = (1.0 - t) * p.row(0) + t * far;
    const double s = cal_scores(emb, cand, lab_emb, p, 2)[0];
    CHECK(s > prev);
    prev = s;
  }
  CHECK_THROWS_AS(cal_scores(emb, p.topRows(1), Matrix(0, 2), Matrix(0, 3), 2), ContractError);
}

TEST_CASE("actune quotas and beta zero degeneracy") {
  CHECK(proportional_quotas({1.0, 1.0, 2.0}, 8) == std::vector<int>{2, 2, 4});
  CHECK(proportional_quotas({1.0, 1.0, 1.0}, 4) == std::vector<int>{2, 1, 1});
  CHECK(proportional_quotas({0.0, 0.0}, 4) == std::vector<int>{0, 0});

  const Dataset data = testing::random_dataset(50, 2, 3, 5);
  const TrainedModel model = random_softmax(2, 3, 6);
  const PoolState pool = all_unlabeled(50);
  const SampleSet q = actune_select(model, data, pool, 10, 4, 0.0, 9);

  // Oracle: unweighted kmeans, quotas by cluster size, entropy top-k inside.
  const Clustering c = kmeans(data.features, 4, 9);
  const auto members = c.members();
  std::vector<double> sizes;
  for (const auto& m : members) sizes.push_back(static_cast<double>(m.size()));
  const auto quota = proportional_quotas(sizes, 10);
  const Matrix p = predict_proba(model, data.features);
  IndexList expect;
  for (std::size_t k = 0; k < members.size(); ++k) {
    std::vector<double> ent;
    for (std::size_t m : members[k]) ent.push_back(entropy_nats(p.row(static_cast<Eigen::Index>(m))));
    for (std::size_t j : top_k(ent, static_cast<std::size_t>(quota[k]))) expect.push_back(members[k][j]);
  }
  CHECK(q.indices == expect);
  CHECK(actune_select(model, data, pool, 10, 4, 1.0, 9).indices ==
        actune_select(model, data, pool, 10, 4, 1.0, 9).indices);
}
