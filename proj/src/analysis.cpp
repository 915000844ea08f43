#include "real/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SVD>

namespace real {

namespace {

void check_pair(const std::vector<int>& predictions, const std::vector<int>& truths) {
  if (predictions.empty()) throw ContractError("metrics: empty input");
  if (predictions.size() != truths.size()) throw ContractError("metrics: length mismatch");
}

std::vector<double> normalized(const std::vector<std::size_t>& counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  std::vector<double> out(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) / total;
  return out;
}

}  // namespace

double accuracy(const std::vector<int>& predictions, const std::vector<int>& truths) {
  check_pair(predictions, truths);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) hits += predictions[i] == truths[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truths.size());
}

double f1_macro(const std::vector<int>& predictions, const std::vector<int>& truths, int num_classes) {
  check_pair(predictions, truths);
  if (num_classes < 1) throw ContractError("f1: need at least one class");
  const auto y = static_cast<std::size_t>(num_classes);
  std::vector<std::size_t> tp(y, 0), fp(y, 0), fn(y, 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int p = predictions[i];
    const int t = truths[i];
    if (p < 0 || p >= num_classes || t < 0 || t >= num_classes) throw ContractError("f1: label out of range");
    if (p == t) {
      ++tp[static_cast<std::size_t>(t)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < y; ++c) {
    const double denom = 2.0 * static_cast<double>(tp[c]) + static_cast<double>(fp[c] + fn[c]);
    total += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  return total / static_cast<double>(y);
}

ErrorRates error_rate_and_lift(const std::vector<int>& predictions, const std::vector<int>& truths,
                               const IndexList& sample) {
  check_pair(predictions, truths);
  if (sample.empty()) throw ContractError("lift: empty sample");
  ErrorRates out;
  std::size_t pool_err = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) pool_err += predictions[i] != truths[i] ? 1 : 0;
  std::size_t sample_err = 0;
  for (std::size_t pos : sample) {
    if (pos >= truths.size()) throw ContractError("lift: sample position outside the pool");
    sample_err += predictions[pos] != truths[pos] ? 1 : 0;
  }
  out.pool_error = static_cast<double>(pool_err) / static_cast<double>(truths.size());
  out.sample_error = static_cast<double>(sample_err) / static_cast<double>(sample.size());
  if (out.pool_error > 0.0) out.lift = out.sample_error / out.pool_error;
  return out;
}

double kl_divergence_bits(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ContractError("kl: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    total += p[i] * std::log2(p[i] / q[i]);
  }
  return total;
}

double jensen_shannon_bits(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ContractError("jsd: length mismatch");
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  const double jsd = 0.5 * kl_divergence_bits(p, m) + 0.5 * kl_divergence_bits(q, m);
  return std::clamp(jsd, 0.0, 1.0);
}

Matrix pca_project_2d(const Matrix& embeddings) {
  if (embeddings.rows() < 2 || embeddings.cols() < 2) {
    throw ContractError("pca: need at least 2 rows and 2 columns");
  }
  const Matrix centered = embeddings.rowwise() - embeddings.colwise().mean();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  Matrix axes = svd.matrixV().leftCols(2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    axes.col(c).cwiseAbs().maxCoeff(&arg);
    if (axes(arg, c) < 0.0) axes.col(c) *= -1.0;
  }
  return centered * axes;
}

BoundaryDivergence grid_boundary_divergence(const Matrix& projection, const std::vector<int>& truths,
                                            const std::vector<int>& predictions, const IndexList& sample,
                                            int num_classes, int grid_size, double boundary_fraction) {
  const auto n = static_cast<std::size_t>(projection.rows());
  if (projection.cols() != 2) throw ContractError("grid: projection must have two columns");
  if (n == 0) throw ContractError("grid: empty projection");
  if (truths.size() != n || predictions.size() != n) throw ContractError("grid: label count mismatch");
  if (grid_size < 1) throw ContractError("grid: size must be >= 1");
  if (!(boundary_fraction > 0.0 && boundary_fraction <= 1.0)) {
    throw ContractError("grid: boundary fraction must lie in (0, 1]");
  }

  BoundaryDivergence out;
  GridStats& g = out.grid;
  g.grid_size = grid_size;
  const auto cells = static_cast<std::size_t>(grid_size) * static_cast<std::size_t>(grid_size);
  g.cell.resize(n);
  g.count.assign(cells, 0);
  g.error_count.assign(cells, 0);
  g.sample_count.assign(cells, 0);
  g.label_entropy.assign(cells, 0.0);

  auto bin = [&](double v, double lo, double hi) {
    if (!(hi > lo)) return 0;
    const auto b = static_cast<int>(std::floor((v - lo) / (hi - lo) * grid_size));
    return std::clamp(b, 0, grid_size - 1);
  };
  const double x0 = projection.col(0).minCoeff(), x1 = projection.col(0).maxCoeff();
  const double y0 = projection.col(1).minCoeff(), y1 = projection.col(1).maxCoeff();
  std::vector<std::vector<std::size_t>> labels(cells);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const int c = bin(projection(r, 1), y0, y1) * grid_size + bin(projection(r, 0), x0, x1);
    const auto cu = static_cast<std::size_t>(c);
    g.cell[i] = c;
    ++g.count[cu];
    if (predictions[i] != truths[i]) ++g.error_count[cu];
    if (labels[cu].empty()) labels[cu].assign(static_cast<std::size_t>(num_classes), 0);
    ++labels[cu].at(static_cast<std::size_t>(truths[i]));
  }
  for (std::size_t pos : sample) {
    if (pos >= n) throw ContractError("grid: sample position outside the pool");
    ++g.sample_count[static_cast<std::size_t>(g.cell[pos])];
  }

  std::vector<std::size_t> nonempty;
  for (std::size_t c = 0; c < cells; ++c) {
    if (g.count[c] == 0) continue;
    nonempty.push_back(c);
    double h = 0.0;
    for (std::size_t k : labels[c]) {
      if (k == 0) continue;
      const double p = static_cast<double>(k) / static_cast<double>(g.count[c]);
      h -= p * std::log(p);
    }
    g.label_entropy[c] = h;
  }
  const auto m = static_cast<std::size_t>(std::ceil(boundary_fraction * static_cast<double>(nonempty.size())));
  std::stable_sort(nonempty.begin(), nonempty.end(), [&](std::size_t a, std::size_t b) {
    return g.label_entropy[a] > g.label_entropy[b];
  });
  g.boundary.assign(nonempty.begin(), nonempty.begin() + static_cast<std::ptrdiff_t>(m));

  std::vector<std::size_t> errors, samples;
  for (std::size_t c : g.boundary) {
    errors.push_back(g.error_count[c]);
    samples.push_back(g.sample_count[c]);
  }
  const auto total_err = std::accumulate(errors.begin(), errors.end(), std::size_t{0});
  const auto total_smp = std::accumulate(samples.begin(), samples.end(), std::size_t{0});
  if (total_err > 0 && total_smp > 0) out.jsd = jensen_shannon_bits(normalized(errors), normalized(samples));
  return out;
}

}  // namespace real
