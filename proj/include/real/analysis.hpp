#pragma once

#include <optional>
#include <vector>

#include "real/common.hpp"

namespace real {

/// Fraction of exact matches.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& truths);

/// Unweighted mean of per-class F1 over all `num_classes` classes; a class
/// with P + R = 0 contributes 0.
double f1_macro(const std::vector<int>& predictions, const std::vector<int>& truths, int num_classes);

struct ErrorRates {
  double sample_error = 0.0;  // eps(Q)
  double pool_error = 0.0;    // eps(D_u)
  std::optional<double> lift; // empty when eps(D_u) == 0
};

/// `predictions`/`truths` cover D_u; `sample` holds positions within D_u.
ErrorRates error_rate_and_lift(const std::vector<int>& predictions, const std::vector<int>& truths,
                               const IndexList& sample);

/// Kullback-Leibler divergence in bits; terms with p_i = 0 vanish.
double kl_divergence_bits(const std::vector<double>& p, const std::vector<double>& q);

/// Jensen-Shannon divergence in bits (range [0, 1]) between two probability
/// vectors of equal length.
double jensen_shannon_bits(const std::vector<double>& p, const std::vector<double>& q);

/// Centred projection onto the top two principal axes. Each axis is signed so
/// its largest-magnitude loading is positive.
Matrix pca_project_2d(const Matrix& embeddings);

struct GridStats {
  int grid_size = 50;
  std::vector<int> cell;                 // grid cell per instance (row-major, y * size + x)
  std::vector<std::size_t> count;        // g_i
  std::vector<std::size_t> error_count;  // g_i^eps
  std::vector<std::size_t> sample_count; // s_i
  std::vector<double> label_entropy;     // per cell; 0 for empty cells
  std::vector<std::size_t> boundary;     // boundary cell ids, entropy descending
};

struct BoundaryDivergence {
  GridStats grid;
  std::optional<double> jsd;  // empty when either boundary distribution has no mass
};

inline constexpr int kDefaultGridSize = 50;
inline constexpr double kDefaultBoundaryFraction = 0.15;

/// Bins the projection into a uniform grid over its bounding box (right and
/// top edges inclusive), keeps the ceil(fraction * nonempty) cells with the
/// highest ground-truth label entropy (ties to the lower cell id), and
/// compares error counts with sample counts on those cells.
BoundaryDivergence grid_boundary_divergence(const Matrix& projection, const std::vector<int>& truths,
                                            const std::vector<int>& predictions, const IndexList& sample,
                                            int num_classes, int grid_size = kDefaultGridSize,
                                            double boundary_fraction = kDefaultBoundaryFraction);

}  // namespace real
