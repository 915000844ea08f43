#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "real/common.hpp"

namespace real {

/// Dense feature matrix (one instance per row) with ground-truth labels.
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  // Throws ContractError when shapes, labels or feature values are invalid.
  void validate() const;
};

enum class DatasetFormat { Text, Binary };

DatasetFormat parse_dataset_format(const std::string& name);

/// Reads a dataset. Text: `# n=<N> d=<d> y=<Y>` header then N tab-separated
/// rows of d floats and an integer label. Binary: `RALD` magic, N, d, Y as
/// u32 LE, N*d f32 LE features (row-major), N u32 LE labels.
/// Errors carry the offending row number.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
void write_dataset(const Dataset& data, const std::filesystem::path& path, DatasetFormat format);

struct SyntheticSpec {
  int num_classes = 2;
  int dim = 2;
  int points_per_class = 100;
  double center_spread = 10.0;
  double noise_sigma = 1.0;
  double overlap_fraction = 0.0;

  void validate() const;
};

/// Gaussian blobs centred on the vertices of a regular simplex with edge
/// length `center_spread`. Per class, round(overlap_fraction * points_per_class)
/// points are drawn from the next class's Gaussian but keep their own label.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Class means used by generate_synthetic (Y x d).
Matrix simplex_means(const SyntheticSpec& spec);

struct PoolState {
  IndexList labeled;
  IndexList unlabeled;
  IndexList validation;
  IndexList test;
  int round = 0;

  std::size_t universe_size() const {
    return labeled.size() + unlabeled.size() + validation.size() + test.size();
  }
};

PoolState split_pool(const Dataset& data, std::size_t warmup_size, std::size_t validation_size,
                     std::size_t test_size, std::uint64_t seed);

struct LabeledPair {
  std::size_t index;
  int label;
  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

/// Reveals ground truth for `indices`; every index must currently be in D_u.
std::vector<LabeledPair> oracle_label(const PoolState& pool, const Dataset& data,
                                      const IndexList& indices);

/// Moves `indices` from D_u to D_l and advances the round counter.
void commit_labels(PoolState& pool, const IndexList& indices);

/// Throws InvariantViolation unless the four index sets are sorted, pairwise
/// disjoint and together cover exactly {0..n-1}.
void check_partition(const PoolState& pool, std::size_t n);

}  // namespace real
