#include "real/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

namespace real {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Stat {
  std::vector<double> values;
  void add(double v) { values.push_back(v); }
  bool empty() const { return values.empty(); }
  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  double std() const {
    if (values.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(values.size() - 1));
  }
};

struct RunRecords {
  json summary;
  std::vector<json> rounds;
};

std::vector<RunRecords> load_reports(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecords> out;
  for (const auto& file : files) {
    if (!report_is_complete(file)) continue;
    std::ifstream in(file);
    RunRecords run;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      if (j.contains("record") && j["record"] == "summary") run.summary = std::move(j);
      else run.rounds.push_back(std::move(j));
    }
    out.push_back(std::move(run));
  }
  return out;
}

// Strategy columns follow the canonical strategy order, unknown names last.
std::vector<std::string> ordered_strategies(const std::vector<std::string>& seen) {
  std::vector<std::string> out;
  for (const auto& name : strategy_names()) {
    if (std::find(seen.begin(), seen.end(), name) != seen.end()) out.push_back(name);
  }
  for (const auto& name : seen) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  return out;
}

}  // namespace

json config_to_json(const ExperimentConfig& c) {
  json ds;
  ds["name"] = c.dataset.name;
  if (c.dataset.synthetic) {
    const auto& s = *c.dataset.synthetic;
    ds["synthetic"] = {{"classes", s.num_classes},   {"dim", s.dim},
                       {"per_class", s.points_per_class}, {"spread", s.center_spread},
                       {"sigma", s.noise_sigma},     {"overlap", s.overlap_fraction},
                       {"seed", c.dataset.synthetic_seed}};
  } else {
    ds["path"] = c.dataset.path;
    ds["format"] = c.dataset.format == DatasetFormat::Binary ? "binary" : "text";
  }
  json model = {{"kind", to_string(c.model.kind)},
                {"learning_rate", c.model.learning_rate},
                {"batch_size", c.model.batch_size},
                {"warmup_epochs", c.model.warmup_epochs},
                {"round_epochs", c.model.round_epochs},
                {"evals_per_epoch", c.model.evals_per_epoch}};
  if (c.model.kind == ModelKind::Mlp) {
    model["hidden"] = c.model.hidden_dim;
    model["dropout"] = c.model.dropout_rate;
  }
  return {{"dataset", ds},
          {"strategy", c.strategy},
          {"rounds", c.rounds},
          {"budget", c.budget},
          {"warmup", c.warmup},
          {"validation", c.validation},
          {"test", c.test},
          {"clusters", c.clusters},
          {"model", model},
          {"mc_passes", c.mc_passes},
          {"cal_neighbors", c.cal_neighbors},
          {"actune_beta", c.actune_beta},
          {"seed_data", c.seed_data},
          {"seed_model", c.seed_model},
          {"seed_strategy", c.seed_strategy},
          {"retrain_from_scratch", c.retrain_from_scratch}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const json& ds = j["dataset"];
    c.dataset.name = ds.value("name", std::string{});
    if (ds.contains("synthetic")) {
      const json& s = ds["synthetic"];
      SyntheticSpec spec;
      spec.num_classes = s.value("classes", spec.num_classes);
      spec.dim = s.value("dim", spec.dim);
      spec.points_per_class = s.value("per_class", spec.points_per_class);
      spec.center_spread = s.value("spread", spec.center_spread);
      spec.noise_sigma = s.value("sigma", spec.noise_sigma);
      spec.overlap_fraction = s.value("overlap", spec.overlap_fraction);
      c.dataset.synthetic = spec;
      c.dataset.synthetic_seed = s.value("seed", std::uint64_t{0});
    } else {
      c.dataset.path = ds.value("path", std::string{});
      c.dataset.format = parse_dataset_format(ds.value("format", std::string{"text"}));
    }
  }
  c.strategy = j.value("strategy", c.strategy);
  c.rounds = j.value("rounds", c.rounds);
  c.budget = j.value("budget", c.budget);
  c.warmup = j.value("warmup", c.warmup);
  c.validation = j.value("validation", c.validation);
  c.test = j.value("test", c.test);
  c.clusters = j.value("clusters", c.clusters);
  if (j.contains("model")) {
    const json& m = j["model"];
    c.model.kind = parse_model_kind(m.value("kind", std::string{"softmax"}));
    c.model.learning_rate = m.value("learning_rate", c.model.kind == ModelKind::Mlp
                                                         ? kMlpDefaultLearningRate
                                                         : kSoftmaxDefaultLearningRate);
    c.model.batch_size = m.value("batch_size", c.model.batch_size);
    c.model.warmup_epochs = m.value("warmup_epochs", c.model.warmup_epochs);
    c.model.round_epochs = m.value("round_epochs", c.model.round_epochs);
    c.model.evals_per_epoch = m.value("evals_per_epoch", c.model.evals_per_epoch);
    c.model.hidden_dim = m.value("hidden", c.model.hidden_dim);
    c.model.dropout_rate = m.value("dropout", c.model.dropout_rate);
  }
  c.mc_passes = j.value("mc_passes", c.mc_passes);
  c.cal_neighbors = j.value("cal_neighbors", c.cal_neighbors);
  c.actune_beta = j.value("actune_beta", c.actune_beta);
  c.seed_data = j.value("seed_data", c.seed_data);
  c.seed_model = j.value("seed_model", c.seed_model);
  c.seed_strategy = j.value("seed_strategy", c.seed_strategy);
  c.retrain_from_scratch = j.value("retrain_from_scratch", c.retrain_from_scratch);
  return c;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string canonical = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<json> report_records(const ExperimentReport& report) {
  const auto& c = report.config;
  const std::string hash = config_hash(c);
  std::vector<json> out;
  for (const auto& r : report.rounds) {
    out.push_back({{"round", r.round},
                   {"acc", r.accuracy},
                   {"f1_macro", r.f1_macro},
                   {"eps_q", r.sample_error},
                   {"eps_pool", r.pool_error},
                   {"lift", optional_number(r.lift)},
                   {"loss0", r.first_step_loss},
                   {"jsd_boundary", optional_number(r.boundary_jsd)},
                   {"n_labeled", r.n_labeled},
                   {"n_unlabeled", r.n_unlabeled},
                   {"strategy", c.strategy},
                   {"seed_data", c.seed_data},
                   {"seed_model", c.seed_model},
                   {"seed_strategy", c.seed_strategy},
                   {"config_hash", hash}});
  }
  out.push_back({{"record", "summary"},
                 {"config_hash", hash},
                 {"strategy", c.strategy},
                 {"dataset", c.dataset.name},
                 {"rounds_completed", report.rounds.size()},
                 {"exhausted", report.exhausted},
                 {"mean_acc", report.mean_accuracy},
                 {"mean_f1_macro", report.mean_f1_macro},
                 {"final_acc", report.final_accuracy},
                 {"final_f1_macro", report.final_f1_macro},
                 {"warmup_val_acc", report.warmup_validation_accuracy},
                 {"config", config_to_json(c)}});
  return out;
}

ReportPaths report_paths(const std::filesystem::path& dir, const std::string& hash) {
  return {dir / (hash + ".jsonl"), dir / (hash + ".manifest.json")};
}

ReportPaths write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string hash = config_hash(report.config);
  const ReportPaths paths = report_paths(dir, hash);
  const auto tmp = paths.records.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write report " + tmp);
    for (const auto& record : report_records(report)) out << record.dump() << '\n';
  }
  std::filesystem::rename(tmp, paths.records);

  json wall = json::array();
  for (const auto& r : report.rounds) wall.push_back(r.wall_seconds);
  const json manifest = {{"config_hash", hash},
                         {"artifacts", {paths.records.filename().string()}},
                         {"tool_version", kToolVersion},
                         {"written_at", utc_now()},
                         {"round_wall_seconds", wall},
                         {"config", config_to_json(report.config)}};
  std::ofstream(paths.manifest, std::ios::trunc) << manifest.dump(2) << '\n';
  return paths;
}

bool report_is_complete(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  bool summary = false;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      summary = j.contains("record") && j["record"] == "summary";
    }
  } catch (const json::exception&) {
    return false;
  }
  return summary;
}

std::vector<ExperimentConfig> expand_sweep(const json& sweep) {
  if (!sweep.contains("datasets") || !sweep.contains("strategies") || !sweep.contains("seeds")) {
    throw ContractError("sweep: config needs datasets, strategies and seeds");
  }
  const json base = sweep.value("base", json::object());
  std::vector<ExperimentConfig> out;
  for (const json& ds : sweep["datasets"]) {
    for (const json& strategy : sweep["strategies"]) {
      for (const json& seed : sweep["seeds"]) {
        json j = base;
        j["dataset"] = ds;
        j["strategy"] = strategy;
        if (seed.is_object()) {
          j["seed_data"] = seed.value("data", std::uint64_t{0});
          j["seed_model"] = seed.value("model", std::uint64_t{0});
          j["seed_strategy"] = seed.value("strategy", std::uint64_t{0});
        } else {
          j["seed_data"] = j["seed_model"] = j["seed_strategy"] = seed.get<std::uint64_t>();
        }
        ExperimentConfig c = config_from_json(j);
        c.validate();
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

SweepResult run_sweep(const std::vector<ExperimentConfig>& configs, const std::filesystem::path& dir,
                      std::ostream* log) {
  std::filesystem::create_directories(dir);
  SweepResult result;
  for (const auto& config : configs) {
    SweepEntry entry{config, config_hash(config), false, {}};
    if (report_is_complete(report_paths(dir, entry.hash).records)) {
      ++result.skipped;
      result.entries.push_back(std::move(entry));
      continue;
    }
    try {
      write_report(run_experiment(config), dir);
      entry.computed = true;
      ++result.computed;
    } catch (const std::exception& e) {
      entry.error = e.what();
      ++result.failed;
    }
    if (log != nullptr) {
      *log << entry.hash << '\t' << config.dataset.name << '\t' << config.strategy << '\t'
           << (entry.error.empty() ? "done" : "failed: " + entry.error) << '\n';
    }
    result.entries.push_back(std::move(entry));
  }
  return result;
}

SummaryTables summarize(const std::filesystem::path& dir) {
  const auto runs = load_reports(dir);
  std::vector<std::string> datasets, strategies;
  std::map<std::pair<std::string, std::string>, Stat> acc, f1;
  struct ErrorStats {
    Stat eps_q, eps_pool, lift, loss0, jsd;
    std::size_t runs = 0;
  };
  std::map<std::pair<std::string, std::string>, ErrorStats> errors;
  std::map<std::tuple<std::string, std::string, int>, std::pair<Stat, Stat>> curves;

  for (const auto& run : runs) {
    const std::string ds = run.summary.value("dataset", std::string{"?"});
    const std::string st = run.summary.value("strategy", std::string{"?"});
    if (std::find(datasets.begin(), datasets.end(), ds) == datasets.end()) datasets.push_back(ds);
    if (std::find(strategies.begin(), strategies.end(), st) == strategies.end()) strategies.push_back(st);
    const auto key = std::make_pair(ds, st);
    acc[key].add(run.summary["mean_acc"].get<double>());
    f1[key].add(run.summary["mean_f1_macro"].get<double>());
    auto& e = errors[key];
    ++e.runs;
    int last_round = 0;
    for (const auto& r : run.rounds) {
      e.eps_q.add(r["eps_q"].get<double>());
      e.eps_pool.add(r["eps_pool"].get<double>());
      if (!r["lift"].is_null()) e.lift.add(r["lift"].get<double>());
      e.loss0.add(r["loss0"].get<double>());
      if (!r["jsd_boundary"].is_null()) e.jsd.add(r["jsd_boundary"].get<double>());
      const int round = r["round"].get<int>();
      auto& cell = curves[{ds, st, round}];
      cell.first.add(r["acc"].get<double>());
      cell.second.add(r["f1_macro"].get<double>());
      last_round = std::max(last_round, round);
    }
    auto& fin = curves[{ds, st, last_round + 1}];
    fin.first.add(run.summary["final_acc"].get<double>());
    fin.second.add(run.summary["final_f1_macro"].get<double>());
  }
  std::sort(datasets.begin(), datasets.end());
  strategies = ordered_strategies(strategies);

  auto wide = [&](const std::map<std::pair<std::string, std::string>, Stat>& table) {
    std::ostringstream out;
    out << "dataset";
    for (const auto& s : strategies) out << '\t' << s << '\t' << s << "_std";
    out << '\n';
    for (const auto& d : datasets) {
      out << d;
      for (const auto& s : strategies) {
        const auto it = table.find({d, s});
        if (it == table.end()) out << '\t' << kAbsentCell << '\t' << kAbsentCell;
        else out << '\t' << fmt(it->second.mean()) << '\t' << fmt(it->second.std());
      }
      out << '\n';
    }
    return out.str();
  };

  SummaryTables tables;
  tables.accuracy = wide(acc);
  tables.f1_macro = wide(f1);

  std::ostringstream err;
  err << "dataset\tstrategy\truns\teps_q\teps_pool\tlift\tloss0\tjsd_boundary\n";
  auto cell = [](const Stat& s) { return s.empty() ? std::string(kAbsentCell) : fmt(s.mean()); };
  for (const auto& d : datasets) {
    for (const auto& s : strategies) {
      const auto it = errors.find({d, s});
      if (it == errors.end()) continue;
      const auto& e = it->second;
      err << d << '\t' << s << '\t' << e.runs << '\t' << cell(e.eps_q) << '\t' << cell(e.eps_pool) << '\t'
          << cell(e.lift) << '\t' << cell(e.loss0) << '\t' << cell(e.jsd) << '\n';
    }
  }
  tables.errors = err.str();

  std::ostringstream cur;
  cur << "dataset\tstrategy\tround\truns\tacc\tacc_std\tf1_macro\tf1_macro_std\n";
  for (const auto& [key, stats] : curves) {
    const auto& [d, s, round] = key;
    cur << d << '\t' << s << '\t' << round << '\t' << stats.first.values.size() << '\t'
        << fmt(stats.first.mean()) << '\t' << fmt(stats.first.std()) << '\t' << fmt(stats.second.mean())
        << '\t' << fmt(stats.second.std()) << '\n';
  }
  tables.curves = cur.str();
  return tables;
}

}  // namespace real
