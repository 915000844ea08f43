#include "real/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <numeric>
#include <string_view>

namespace real {

namespace {

constexpr std::array<char, 4> kDatasetMagic = {'R', 'A', 'L', 'D'};

std::string row_msg(const std::string& what, std::size_t row) {
  return what + " at row " + std::to_string(row);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> b = {
      static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
      static_cast<unsigned char>((v >> 16) & 0xFF), static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

bool get_f32(std::istream& in, float& f) {
  std::uint32_t bits = 0;
  if (!get_u32(in, bits)) return false;
  std::memcpy(&f, &bits, sizeof f);
  return true;
}

// Parses "key=<unsigned>" tokens from the text header.
std::size_t header_field(const std::string& header, const std::string& key) {
  const auto pos = header.find(" " + key + "=");
  if (pos == std::string::npos) throw FormatError("malformed header: missing " + key + "=");
  const char* begin = header.data() + pos + key.size() + 2;
  const char* end = header.data() + header.size();
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr == begin) throw FormatError("malformed header: bad " + key);
  return value;
}

Dataset load_text(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#", 0) != 0) {
    throw FormatError("malformed header: expected '# n=<N> d=<d> y=<Y>'");
  }
  const std::size_t n = header_field(line, "n");
  const std::size_t d = header_field(line, "d");
  const std::size_t y = header_field(line, "y");
  if (n == 0 || d == 0 || y < 2) throw FormatError("malformed header: need n>=1, d>=1, y>=2");

  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  data.labels.resize(n);
  data.num_classes = static_cast<int>(y);

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= n) throw FormatError(row_msg("more rows than declared", row + 1));
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const auto tab = rest.find('\t');
      cells.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (cells.size() != d + 1) throw FormatError(row_msg("inconsistent row width", row + 1));
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      const auto cell = cells[j];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw FormatError(row_msg("unparsable feature", row + 1));
      }
      if (!std::isfinite(v)) throw FormatError(row_msg("non-finite feature", row + 1));
      data.features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = v;
    }
    long long label = -1;
    const auto cell = cells[d];
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw FormatError(row_msg("unparsable label", row + 1));
    }
    if (label < 0 || label >= static_cast<long long>(y)) {
      throw FormatError(row_msg("label out of range", row + 1));
    }
    data.labels[row] = static_cast<int>(label);
    ++row;
  }
  if (row != n) throw FormatError("fewer rows than declared: got " + std::to_string(row));
  return data;
}

Dataset load_binary(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kDatasetMagic) {
    throw FormatError("malformed header: bad magic");
  }
  std::uint32_t n = 0, d = 0, y = 0;
  if (!get_u32(in, n) || !get_u32(in, d) || !get_u32(in, y)) {
    throw FormatError("malformed header: truncated");
  }
  if (n == 0 || d == 0 || y < 2) throw FormatError("malformed header: need n>=1, d>=1, y>=2");
  Dataset data;
  data.features.resize(n, d);
  data.labels.resize(n);
  data.num_classes = static_cast<int>(y);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      float f = 0.0f;
      if (!get_f32(in, f)) throw FormatError(row_msg("truncated features", i + 1));
      if (!std::isfinite(f)) throw FormatError(row_msg("non-finite feature", i + 1));
      data.features(i, j) = static_cast<double>(f);
    }
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t label = 0;
    if (!get_u32(in, label)) throw FormatError(row_msg("truncated labels", i + 1));
    if (label >= y) throw FormatError(row_msg("label out of range", i + 1));
    data.labels[i] = static_cast<int>(label);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after labels");
  return data;
}

}  // namespace

void Dataset::validate() const {
  if (labels.empty()) throw ContractError("dataset: need at least one instance");
  if (features.cols() < 1) throw ContractError("dataset: need at least one feature column");
  if (num_classes < 2) throw ContractError("dataset: need at least two classes");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ContractError("dataset: feature rows and label count differ");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ContractError(row_msg("label out of range", i + 1));
    }
    if (!features.row(static_cast<Eigen::Index>(i)).allFinite()) {
      throw ContractError(row_msg("non-finite feature", i + 1));
    }
  }
}

DatasetFormat parse_dataset_format(const std::string& name) {
  if (name == "text" || name == "tsv") return DatasetFormat::Text;
  if (name == "binary" || name == "bin") return DatasetFormat::Binary;
  throw ContractError("unknown dataset format '" + name + "' (expected text or binary)");
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  std::ifstream in(path, format == DatasetFormat::Binary ? std::ios::binary : std::ios::in);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  Dataset data = format == DatasetFormat::Binary ? load_binary(in) : load_text(in);
  data.name = path.stem().string();
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path, DatasetFormat format) {
  data.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write dataset " + path.string());
  const auto n = data.size();
  const auto d = data.dim();
  if (format == DatasetFormat::Binary) {
    out.write(kDatasetMagic.data(), 4);
    put_u32(out, static_cast<std::uint32_t>(n));
    put_u32(out, static_cast<std::uint32_t>(d));
    put_u32(out, static_cast<std::uint32_t>(data.num_classes));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        put_f32(out, static_cast<float>(data.features(static_cast<Eigen::Index>(i),
                                                      static_cast<Eigen::Index>(j))));
      }
    }
    for (int label : data.labels) put_u32(out, static_cast<std::uint32_t>(label));
    return;
  }
  out << "# n=" << n << " d=" << d << " y=" << data.num_classes << '\n';
  std::array<char, 64> buf{};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
      out.write(buf.data(), ptr - buf.data());
      out << '\t';
    }
    out << data.labels[i] << '\n';
  }
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ContractError("synthetic: classes must be >= 2");
  if (dim < 1) throw ContractError("synthetic: dim must be >= 1");
  if (dim < num_classes - 1) {
    throw ContractError("synthetic: dim must be >= classes - 1 to place simplex means");
  }
  if (points_per_class < 1) throw ContractError("synthetic: per-class count must be >= 1");
  if (!(center_spread >= 0.0) || !std::isfinite(center_spread)) {
    throw ContractError("synthetic: spread must be finite and >= 0");
  }
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) {
    throw ContractError("synthetic: sigma must be finite and > 0");
  }
  if (!(overlap_fraction >= 0.0 && overlap_fraction <= 1.0)) {
    throw ContractError("synthetic: overlap must lie in [0, 1]");
  }
}

Matrix simplex_means(const SyntheticSpec& spec) {
  spec.validate();
  const int y = spec.num_classes;
  // Helmert basis of the sum-zero subspace of R^Y: vertex k has coordinate
  // <e_k, h_j> along h_j = (1,..,1,-j,0,..)/sqrt(j(j+1)). Pairwise distance of
  // the unit vertices is sqrt(2).
  Matrix means = Matrix::Zero(y, spec.dim);
  const double scale = spec.center_spread / std::sqrt(2.0);
  for (int k = 0; k < y; ++k) {
    for (int j = 1; j < y; ++j) {
      const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
      double coord = 0.0;
      if (k < j) coord = 1.0 / norm;
      else if (k == j) coord = -static_cast<double>(j) / norm;
      means(k, j - 1) = scale * coord;
    }
  }
  return means;
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  const Matrix means = simplex_means(spec);
  const int y = spec.num_classes;
  const int per = spec.points_per_class;
  const auto n = static_cast<std::size_t>(y) * static_cast<std::size_t>(per);
  const int n_overlap = static_cast<int>(std::lround(spec.overlap_fraction * per));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);

  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(n), spec.dim);
  data.labels.resize(n);
  data.num_classes = y;
  data.name = "synthetic";

  std::vector<int> slots(static_cast<std::size_t>(per));
  std::size_t row = 0;
  for (int c = 0; c < y; ++c) {
    std::vector<char> borrowed(static_cast<std::size_t>(per), 0);
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng);
    for (int i = 0; i < n_overlap; ++i) borrowed[static_cast<std::size_t>(slots[i])] = 1;
    const int neighbour = (c + 1) % y;
    for (int i = 0; i < per; ++i, ++row) {
      const int source = borrowed[static_cast<std::size_t>(i)] ? neighbour : c;
      for (int j = 0; j < spec.dim; ++j) {
        data.features(static_cast<Eigen::Index>(row), j) = means(source, j) + noise(rng);
      }
      data.labels[row] = c;
    }
  }
  return data;
}

PoolState split_pool(const Dataset& data, std::size_t warmup_size, std::size_t validation_size,
                     std::size_t test_size, std::uint64_t seed) {
  data.validate();
  const std::size_t n = data.size();
  const auto y = static_cast<std::size_t>(data.num_classes);
  if (warmup_size + validation_size + test_size > n) {
    throw ContractError("split: warm-up + validation + test sizes exceed dataset size");
  }
  if (warmup_size < y) throw ContractError("split: warm-up size must be >= number of classes");

  std::mt19937_64 rng(seed);
  std::vector<IndexList> by_class(y);
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

  // Classes receiving the extra warm-up slot are chosen at random.
  std::vector<std::size_t> class_order(y);
  std::iota(class_order.begin(), class_order.end(), std::size_t{0});
  std::shuffle(class_order.begin(), class_order.end(), rng);
  std::vector<std::size_t> quota(y, warmup_size / y);
  for (std::size_t r = 0; r < warmup_size % y; ++r) ++quota[class_order[r]];

  PoolState pool;
  std::vector<char> taken(n, 0);
  for (std::size_t c = 0; c < y; ++c) {
    if (by_class[c].size() < quota[c]) {
      throw ContractError("split: class " + std::to_string(c) + " has too few instances (" +
                          std::to_string(by_class[c].size()) + ") for stratified warm-up");
    }
    for (std::size_t k = 0; k < quota[c]; ++k) {
      pool.labeled.push_back(by_class[c][k]);
      taken[by_class[c][k]] = 1;
    }
  }

  IndexList rest;
  for (std::size_t i = 0; i < n; ++i) {
    if (!taken[i]) rest.push_back(i);
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  pool.validation.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(validation_size));
  pool.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(validation_size),
                   rest.begin() + static_cast<std::ptrdiff_t>(validation_size + test_size));
  pool.unlabeled.assign(rest.begin() + static_cast<std::ptrdiff_t>(validation_size + test_size),
                        rest.end());
  for (auto* set : {&pool.labeled, &pool.unlabeled, &pool.validation, &pool.test}) {
    std::sort(set->begin(), set->end());
  }
  return pool;
}

std::vector<LabeledPair> oracle_label(const PoolState& pool, const Dataset& data,
                                      const IndexList& indices) {
  std::vector<LabeledPair> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (!std::binary_search(pool.unlabeled.begin(), pool.unlabeled.end(), idx)) {
      throw ContractError("oracle: index " + std::to_string(idx) + " is not in the unlabeled pool");
    }
    out.push_back({idx, data.labels[idx]});
  }
  return out;
}

void commit_labels(PoolState& pool, const IndexList& indices) {
  IndexList moving(indices);
  std::sort(moving.begin(), moving.end());
  if (std::adjacent_find(moving.begin(), moving.end()) != moving.end()) {
    throw ContractError("commit: duplicate indices");
  }
  if (!std::includes(pool.unlabeled.begin(), pool.unlabeled.end(), moving.begin(), moving.end())) {
    throw ContractError("commit: indices must all be in the unlabeled pool");
  }
  IndexList remaining;
  remaining.reserve(pool.unlabeled.size() - moving.size());
  std::set_difference(pool.unlabeled.begin(), pool.unlabeled.end(), moving.begin(), moving.end(),
                      std::back_inserter(remaining));
  IndexList labeled;
  labeled.reserve(pool.labeled.size() + moving.size());
  std::merge(pool.labeled.begin(), pool.labeled.end(), moving.begin(), moving.end(),
             std::back_inserter(labeled));
  pool.unlabeled = std::move(remaining);
  pool.labeled = std::move(labeled);
  ++pool.round;
}

void check_partition(const PoolState& pool, std::size_t n) {
  std::vector<char> seen(n, 0);
  for (const auto* set : {&pool.labeled, &pool.unlabeled, &pool.validation, &pool.test}) {
    if (!std::is_sorted(set->begin(), set->end())) throw InvariantViolation("pool: index set not sorted");
    for (std::size_t idx : *set) {
      if (idx >= n) throw InvariantViolation("pool: index outside the dataset");
      if (seen[idx]) throw InvariantViolation("pool: index sets overlap at " + std::to_string(idx));
      seen[idx] = 1;
    }
  }
  if (pool.universe_size() != n) throw InvariantViolation("pool: partition does not cover the dataset");
}

}  // namespace real
