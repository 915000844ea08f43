#include "real/classifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace real {

namespace {

constexpr std::array<char, 4> kModelMagic = {'R', 'A', 'L', 'M'};

struct Forward {
  Matrix hidden;   // post-tanh, pre-dropout (mlp only)
  Matrix dropped;  // hidden after the dropout mask (mlp only)
  Matrix probs;
};

void softmax_rows(Matrix& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

// `mask` holds keep/(1-p) scale factors, or is empty for a deterministic pass.
Forward forward(const TrainedModel& model, const Matrix& x, const Matrix* mask) {
  const auto& p = model.parameters();
  Forward f;
  if (model.config().kind == ModelKind::Softmax) {
    Matrix logits = (x * p[0].weight.transpose()).rowwise() + p[0].bias.transpose();
    softmax_rows(logits);
    f.probs = std::move(logits);
    return f;
  }
  f.hidden = ((x * p[0].weight.transpose()).rowwise() + p[0].bias.transpose()).array().tanh();
  f.dropped = mask != nullptr ? Matrix(f.hidden.cwiseProduct(*mask)) : f.hidden;
  Matrix logits = (f.dropped * p[1].weight.transpose()).rowwise() + p[1].bias.transpose();
  softmax_rows(logits);
  f.probs = std::move(logits);
  return f;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Matrix mask(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = keep(rng) ? scale : 0.0;
  }
  return mask;
}

void check_input(const TrainedModel& model, const Matrix& features) {
  if (static_cast<std::size_t>(features.cols()) != model.input_dim()) {
    throw ContractError("classifier: feature width " + std::to_string(features.cols()) +
                        " does not match model input " + std::to_string(model.input_dim()));
  }
}

void check_labels(const TrainedModel& model, const Matrix& features, const std::vector<int>& labels) {
  check_input(model, features);
  if (labels.empty()) throw ContractError("classifier: empty batch");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ContractError("classifier: feature rows and label count differ");
  }
  for (int y : labels) {
    if (y < 0 || y >= model.num_classes()) throw ContractError("classifier: label out of range");
  }
}

Parameters gradient_impl(const TrainedModel& model, const Matrix& x, const std::vector<int>& labels,
                         const Matrix* mask) {
  const Forward f = forward(model, x, mask);
  Matrix delta = f.probs;
  for (std::size_t i = 0; i < labels.size(); ++i) delta(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
  delta /= static_cast<double>(labels.size());

  const auto& p = model.parameters();
  Parameters grad(p.size());
  if (model.config().kind == ModelKind::Softmax) {
    grad[0].weight = delta.transpose() * x;
    grad[0].bias = delta.colwise().sum().transpose();
    return grad;
  }
  grad[1].weight = delta.transpose() * f.dropped;
  grad[1].bias = delta.colwise().sum().transpose();
  Matrix upstream = delta * p[1].weight;
  if (mask != nullptr) upstream = upstream.cwiseProduct(*mask);
  const Matrix pre = upstream.cwiseProduct((1.0 - f.hidden.array().square()).matrix());
  grad[0].weight = pre.transpose() * x;
  grad[0].bias = pre.colwise().sum().transpose();
  return grad;
}

double accuracy_of(const TrainedModel& model, const Matrix& x, const std::vector<int>& labels) {
  const auto pred = predict(model, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.put(static_cast<char>((v >> s) & 0xFF));
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  for (int s = 0; s < 32; s += 8) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("checkpoint: truncated");
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(c)) << s;
  }
  return v;
}

void put_f32(std::ostream& out, double value) {
  const auto f = static_cast<float>(value);
  std::uint32_t bits = 0;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

double get_f32(std::istream& in) {
  const std::uint32_t bits = get_u32(in);
  float f = 0.0f;
  std::memcpy(&f, &bits, sizeof f);
  return static_cast<double>(f);
}

}  // namespace

ModelKind parse_model_kind(const std::string& name) {
  if (name == "softmax") return ModelKind::Softmax;
  if (name == "mlp") return ModelKind::Mlp;
  throw ContractError("unknown classifier '" + name + "' (expected softmax or mlp)");
}

std::string to_string(ModelKind kind) { return kind == ModelKind::Softmax ? "softmax" : "mlp"; }

void ModelConfig::validate() const {
  if (kind == ModelKind::Mlp) {
    if (hidden_dim < 1) throw ContractError("model: hidden_dim must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw ContractError("model: dropout_rate must lie in [0, 1)");
    }
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ContractError("model: learning_rate must be positive");
  }
  if (batch_size < 1) throw ContractError("model: batch_size must be >= 1");
  if (warmup_epochs < 0 || round_epochs < 0) throw ContractError("model: epochs must be >= 0");
  if (evals_per_epoch < 1) throw ContractError("model: evals_per_epoch must be >= 1");
}

TrainedModel::TrainedModel(ModelConfig config, int num_classes, Parameters params)
    : config_(std::move(config)), num_classes_(num_classes), params_(std::move(params)) {
  const std::size_t expected = config_.kind == ModelKind::Softmax ? 1 : 2;
  if (params_.size() != expected) throw ContractError("model: wrong number of layers for kind");
  if (params_.back().weight.rows() != num_classes_) {
    throw ContractError("model: output layer does not match class count");
  }
}

TrainedModel TrainedModel::initialize(const ModelConfig& config, std::size_t input_dim,
                                      int num_classes) {
  config.validate();
  if (input_dim < 1) throw ContractError("model: input_dim must be >= 1");
  if (num_classes < 2) throw ContractError("model: need at least two classes");
  const auto d = static_cast<Eigen::Index>(input_dim);
  Parameters params;
  if (config.kind == ModelKind::Softmax) {
    params.push_back({Matrix::Zero(num_classes, d), Vector::Zero(num_classes)});
  } else {
    std::mt19937_64 rng(config.weight_init_seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    auto draw = [&](Eigen::Index r, Eigen::Index c) {
      Matrix m(r, c);
      for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
      }
      return m;
    };
    const Eigen::Index h = config.hidden_dim;
    Matrix w1 = draw(h, d);
    Vector b1 = draw(h, 1).col(0);
    Matrix w2 = draw(num_classes, h);
    Vector b2 = draw(num_classes, 1).col(0);
    params.push_back({std::move(w1), std::move(b1)});
    params.push_back({std::move(w2), std::move(b2)});
  }
  return TrainedModel(config, num_classes, std::move(params));
}

std::size_t TrainedModel::embedding_dim() const {
  return config_.kind == ModelKind::Softmax ? input_dim()
                                            : static_cast<std::size_t>(params_.front().weight.rows());
}

std::pair<TrainedModel, TrainStats> train(const ModelConfig& config, const Dataset& data,
                                          const std::vector<LabeledPair>& train_set,
                                          const std::vector<LabeledPair>& val_set, int epochs,
                                          std::uint64_t rng_seed,
                                          const std::optional<TrainedModel>& warm_start) {
  config.validate();
  if (train_set.empty()) throw ContractError("train: empty training set");
  if (epochs < 0) throw ContractError("train: epochs must be >= 0");
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& pair : *set) {
      if (pair.label < 0 || pair.label >= data.num_classes) {
        throw ContractError("train: label out of range");
      }
      if (pair.index >= data.size()) throw ContractError("train: index outside the dataset");
    }
  }

  TrainedModel model = warm_start ? TrainedModel(config, warm_start->num_classes(), warm_start->parameters())
                                  : TrainedModel::initialize(config, data.dim(), data.num_classes);
  if (model.input_dim() != data.dim() || model.num_classes() != data.num_classes) {
    throw ContractError("train: warm start model does not match the dataset");
  }

  IndexList train_rows;
  std::vector<int> train_labels;
  for (const auto& pair : train_set) {
    train_rows.push_back(pair.index);
    train_labels.push_back(pair.label);
  }
  const Matrix train_x = gather_rows(data.features, train_rows);

  const bool has_val = !val_set.empty();
  IndexList val_rows;
  std::vector<int> val_labels;
  for (const auto& pair : val_set) {
    val_rows.push_back(pair.index);
    val_labels.push_back(pair.label);
  }
  const Matrix val_x = has_val ? gather_rows(data.features, val_rows) : train_x;
  const std::vector<int>& eval_labels = has_val ? val_labels : train_labels;

  const std::size_t n = train_set.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches = (n + batch - 1) / batch;
  // Batch counts (1-based) after which validation runs.
  std::vector<std::size_t> eval_points;
  for (int e = 1; e <= config.evals_per_epoch; ++e) {
    const std::size_t at = (static_cast<std::size_t>(e) * batches + config.evals_per_epoch - 1) /
                           static_cast<std::size_t>(config.evals_per_epoch);
    if (eval_points.empty() || eval_points.back() != at) eval_points.push_back(std::max<std::size_t>(at, 1));
  }

  std::mt19937_64 rng(rng_seed);
  const bool use_dropout = config.kind == ModelKind::Mlp && config.dropout_rate > 0.0;
  TrainStats stats;
  std::optional<Parameters> best;
  double best_acc = -1.0;
  bool first = true;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t next_eval = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * batch;
      const std::size_t hi = std::min(n, lo + batch);
      IndexList rows(order.begin() + static_cast<std::ptrdiff_t>(lo),
                     order.begin() + static_cast<std::ptrdiff_t>(hi));
      const Matrix bx = gather_rows(train_x, rows);
      std::vector<int> by;
      for (std::size_t r : rows) by.push_back(train_labels[r]);

      const double batch_loss = mean_cross_entropy(model, bx, by);
      if (first) {
        stats.first_step_loss = batch_loss;
        first = false;
      }
      loss_sum += batch_loss;
      ++loss_count;

      Matrix mask;
      if (use_dropout) {
        mask = dropout_mask(bx.rows(), config.hidden_dim, config.dropout_rate, rng);
      }
      const Parameters grad = gradient_impl(model, bx, by, use_dropout ? &mask : nullptr);
      auto& params = model.mutable_parameters();
      for (std::size_t l = 0; l < params.size(); ++l) {
        params[l].weight -= config.learning_rate * grad[l].weight;
        params[l].bias -= config.learning_rate * grad[l].bias;
      }

      if (next_eval < eval_points.size() && b + 1 == eval_points[next_eval]) {
        ++next_eval;
        stats.loss_curve.push_back(loss_sum / static_cast<double>(loss_count));
        loss_sum = 0.0;
        loss_count = 0;
        const double acc = accuracy_of(model, val_x, eval_labels);
        if (acc > best_acc) {
          best_acc = acc;
          best = model.parameters();
        }
      }
    }
  }

  if (best) {
    model.mutable_parameters() = std::move(*best);
    stats.best_validation_accuracy = best_acc;
  } else {
    stats.first_step_loss = mean_cross_entropy(model, train_x, train_labels);
    stats.best_validation_accuracy = accuracy_of(model, val_x, eval_labels);
  }
  return {std::move(model), std::move(stats)};
}

Matrix predict_proba(const TrainedModel& model, const Matrix& features) {
  check_input(model, features);
  return forward(model, features, nullptr).probs;
}

std::vector<int> predict(const TrainedModel& model, const Matrix& features) {
  const Matrix probs = predict_proba(model, features);
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index arg = 0;
    probs.row(i).maxCoeff(&arg);  // first maximum wins
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

Matrix encode(const TrainedModel& model, const Matrix& features) {
  check_input(model, features);
  if (model.config().kind == ModelKind::Softmax) return features;
  return forward(model, features, nullptr).hidden;
}

std::vector<Matrix> mc_dropout_proba(const TrainedModel& model, const Matrix& features, int passes,
                                     std::uint64_t seed) {
  check_input(model, features);
  if (model.config().kind != ModelKind::Mlp || model.config().dropout_rate <= 0.0) {
    throw ContractError("mc dropout requires an mlp classifier with dropout_rate > 0");
  }
  if (passes < 2) throw ContractError("mc dropout requires at least 2 passes");
  std::mt19937_64 rng(seed);
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(passes));
  for (int pass = 0; pass < passes; ++pass) {
    const Matrix mask =
        dropout_mask(features.rows(), model.config().hidden_dim, model.config().dropout_rate, rng);
    out.push_back(forward(model, features, &mask).probs);
  }
  return out;
}

double mean_cross_entropy(const TrainedModel& model, const Matrix& features,
                          const std::vector<int>& labels) {
  check_labels(model, features, labels);
  const Matrix probs = forward(model, features, nullptr).probs;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = probs(static_cast<Eigen::Index>(i), labels[i]);
    total -= std::log(std::max(p, std::numeric_limits<double>::min()));
  }
  return total / static_cast<double>(labels.size());
}

Parameters loss_gradient(const TrainedModel& model, const Matrix& features,
                         const std::vector<int>& labels) {
  check_labels(model, features, labels);
  return gradient_impl(model, features, labels, nullptr);
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(kModelMagic.data(), 4);
  put_u32(out, model.config().kind == ModelKind::Softmax ? 0U : 1U);
  put_u32(out, static_cast<std::uint32_t>(model.num_classes()));
  put_f32(out, model.config().dropout_rate);
  put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& layer : model.parameters()) {
    put_u32(out, static_cast<std::uint32_t>(layer.weight.rows()));
    put_u32(out, static_cast<std::uint32_t>(layer.weight.cols()));
  }
  for (const auto& layer : model.parameters()) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) put_f32(out, layer.weight(i, j));
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) put_f32(out, layer.bias(i));
  }
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kModelMagic) throw FormatError("checkpoint: bad magic");
  ModelConfig config;
  const std::uint32_t kind = get_u32(in);
  if (kind > 1) throw FormatError("checkpoint: unknown model kind");
  config.kind = kind == 0 ? ModelKind::Softmax : ModelKind::Mlp;
  const auto classes = static_cast<int>(get_u32(in));
  config.dropout_rate = get_f32(in);
  const std::uint32_t layers = get_u32(in);
  if (layers != (kind == 0 ? 1U : 2U)) throw FormatError("checkpoint: layer count does not match kind");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    shapes.emplace_back(rows, cols);
  }
  Parameters params;
  for (const auto& [rows, cols] : shapes) {
    DenseLayer layer{Matrix(rows, cols), Vector(rows)};
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) layer.weight(i, j) = get_f32(in);
    }
    for (std::uint32_t i = 0; i < rows; ++i) layer.bias(i) = get_f32(in);
    params.push_back(std::move(layer));
  }
  if (config.kind == ModelKind::Mlp) {
    config.hidden_dim = static_cast<int>(shapes[0].first);
    config.learning_rate = kMlpDefaultLearningRate;
    if (shapes[1].second != shapes[0].first) throw FormatError("checkpoint: layer shapes disagree");
  }
  return TrainedModel(config, classes, std::move(params));
}

}  // namespace real
