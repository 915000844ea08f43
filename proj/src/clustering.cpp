#include "real/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace real {

namespace {

double weight_at(std::span<const double> weights, std::size_t i) {
  return weights.empty() ? 1.0 : weights[i];
}

// Nearest center per row (ties to the lowest index) and its squared distance.
void assign(const Matrix& points, const Matrix& centers, std::vector<int>& labels,
            std::vector<double>& dist) {
  const auto n = static_cast<std::size_t>(points.rows());
  labels.assign(n, 0);
  dist.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = points.row(static_cast<Eigen::Index>(i));
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (row - centers.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels[i] = arg;
    dist[i] = best;
  }
}

double weighted_total(const std::vector<double>& dist, std::span<const double> weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) total += weight_at(weights, i) * dist[i];
  return total;
}

// Means of current members; empty clusters move onto the farthest rows.
Matrix update_centers(const Matrix& points, const Matrix& centers, const std::vector<int>& labels,
                      std::vector<double> dist, std::span<const double> weights) {
  const Eigen::Index k = centers.rows();
  Matrix sums = Matrix::Zero(k, points.cols());
  Matrix plain = Matrix::Zero(k, points.cols());
  std::vector<double> mass(static_cast<std::size_t>(k), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    const double w = weight_at(weights, i);
    sums.row(labels[i]) += w * points.row(static_cast<Eigen::Index>(i));
    plain.row(labels[i]) += points.row(static_cast<Eigen::Index>(i));
    mass[c] += w;
    ++count[c];
  }
  Matrix next = centers;
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (count[ci] == 0) continue;
    next.row(c) = mass[ci] > 0.0 ? Matrix(sums.row(c) / mass[ci])
                                 : Matrix(plain.row(c) / static_cast<double>(count[ci]));
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (count[static_cast<std::size_t>(c)] != 0) continue;
    const auto far = static_cast<std::size_t>(
        std::max_element(dist.begin(), dist.end()) - dist.begin());  // first maximum
    next.row(c) = points.row(static_cast<Eigen::Index>(far));
    dist[far] = 0.0;
  }
  return next;
}

bool has_empty(const std::vector<int>& labels, Eigen::Index k) {
  std::vector<char> used(static_cast<std::size_t>(k), 0);
  for (int l : labels) used[static_cast<std::size_t>(l)] = 1;
  return std::find(used.begin(), used.end(), 0) != used.end();
}

}  // namespace

std::vector<IndexList> Clustering::members() const {
  std::vector<IndexList> out(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    out[static_cast<std::size_t>(assignments[i])].push_back(i);
  }
  return out;
}

IndexList kmeanspp_seed_indices(const Matrix& points, int k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k < 1) throw ContractError("kmeans++: k must be >= 1");
  if (static_cast<std::size_t>(k) > n) {
    throw ContractError("kmeans++: k=" + std::to_string(k) + " exceeds row count " + std::to_string(n));
  }
  if (!points.allFinite()) throw ContractError("kmeans++: non-finite embeddings");

  std::mt19937_64 rng(seed);
  IndexList chosen;
  std::vector<char> picked(n, 0);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t idx) {
    chosen.push_back(idx);
    picked[idx] = 1;
    const auto c = points.row(static_cast<Eigen::Index>(idx));
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (points.row(static_cast<Eigen::Index>(i)) - c).squaredNorm());
    }
    nearest[idx] = 0.0;
  };

  take(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  while (chosen.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += picked[i] ? 0.0 : nearest[i];
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      std::size_t pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (picked[i] || nearest[i] <= 0.0) continue;
        acc += nearest[i];
        pick = i;
        if (acc > target) break;
      }
      take(pick);
    } else {
      IndexList open;
      for (std::size_t i = 0; i < n; ++i) {
        if (!picked[i]) open.push_back(i);
      }
      take(open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)]);
    }
  }
  return chosen;
}

Matrix kmeanspp_seed(const Matrix& points, int k, std::uint64_t seed) {
  return gather_rows(points, kmeanspp_seed_indices(points, k, seed));
}

double inertia(const Matrix& points, const Matrix& centers, const std::vector<int>& assignments,
               std::span<const double> weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    total += weight_at(weights, i) *
             (points.row(static_cast<Eigen::Index>(i)) - centers.row(assignments[i])).squaredNorm();
  }
  return total;
}

Clustering lloyd(const Matrix& points, const Matrix& init_centers, int max_iter, double rel_tol,
                 std::span<const double> weights) {
  if (init_centers.cols() != points.cols()) throw ContractError("lloyd: center width mismatch");
  if (init_centers.rows() < 1) throw ContractError("lloyd: need at least one center");
  if (max_iter < 1) throw ContractError("lloyd: max_iter must be >= 1");
  if (!weights.empty() && weights.size() != static_cast<std::size_t>(points.rows())) {
    throw ContractError("lloyd: weight count does not match rows");
  }

  Clustering out;
  out.k = static_cast<int>(init_centers.rows());
  out.centers = init_centers;
  std::vector<double> dist;
  assign(points, out.centers, out.assignments, dist);
  out.inertia_history.push_back(weighted_total(dist, weights));

  // Guard against degenerate inputs (fewer distinct rows than centers), where
  // an empty cluster cannot be repaired.
  const int hard_cap = max_iter + static_cast<int>(init_centers.rows()) + 1;
  for (int iter = 0; iter < hard_cap; ++iter) {
    const bool empty = has_empty(out.assignments, out.k);
    if (!empty && (out.inertia_history.back() == 0.0 || iter >= max_iter)) break;
    if (empty && iter >= max_iter && iter > max_iter + out.k) break;

    Matrix next = update_centers(points, out.centers, out.assignments, dist, weights);
    std::vector<int> labels;
    std::vector<double> next_dist;
    assign(points, next, labels, next_dist);
    const double prev = out.inertia_history.back();
    const double cur = weighted_total(next_dist, weights);
    const bool fixed = labels == out.assignments && next == out.centers;
    out.centers = std::move(next);
    out.assignments = std::move(labels);
    dist = std::move(next_dist);
    out.inertia_history.push_back(cur);
    if (has_empty(out.assignments, out.k)) continue;
    if (fixed || prev - cur <= rel_tol * prev) break;
  }
  return out;
}

Clustering kmeans(const Matrix& points, int k, std::uint64_t seed, std::span<const double> weights) {
  const int clamped = std::min<int>(k, static_cast<int>(points.rows()));
  return lloyd(points, kmeanspp_seed(points, clamped, seed), kDefaultMaxIter, kDefaultRelTol, weights);
}

}  // namespace real
