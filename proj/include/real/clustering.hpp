#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "real/common.hpp"

namespace real {

struct Clustering {
  std::vector<int> assignments;  // cluster id per row
  Matrix centers;                // k x d
  std::vector<double> inertia_history;
  int k = 0;

  /// Member rows of each cluster, ascending.
  std::vector<IndexList> members() const;
};

inline constexpr int kDefaultMaxIter = 100;
inline constexpr double kDefaultRelTol = 1e-4;

/// D^2 seeding: first row uniform, each later row drawn with probability
/// proportional to its squared distance to the nearest chosen row. Returns
/// k distinct row indices in pick order. When every remaining row coincides
/// with a chosen one the next pick is uniform over unchosen rows.
IndexList kmeanspp_seed_indices(const Matrix& points, int k, std::uint64_t seed);

/// Rows of `points` at kmeanspp_seed_indices.
Matrix kmeanspp_seed(const Matrix& points, int k, std::uint64_t seed);

/// Lloyd iterations. Assignment uses squared Euclidean distance with ties to
/// the lowest center index; clusters left empty are reseeded onto the row
/// farthest from its nearest center. Stops at a fixed point, when the relative
/// inertia decrease falls below rel_tol, or after max_iter updates. With
/// non-empty `weights`, centers are weighted means and inertia is weighted.
Clustering lloyd(const Matrix& points, const Matrix& init_centers, int max_iter = kDefaultMaxIter,
                 double rel_tol = kDefaultRelTol, std::span<const double> weights = {});

/// Sum of (weighted) squared distances from rows to their assigned centers.
double inertia(const Matrix& points, const Matrix& centers, const std::vector<int>& assignments,
               std::span<const double> weights = {});

/// Seeds with k-means++ then runs lloyd; k is clamped to the row count.
Clustering kmeans(const Matrix& points, int k, std::uint64_t seed, std::span<const double> weights = {});

}  // namespace real
