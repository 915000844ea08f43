#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "real/report.hpp"
#include "test_helpers.hpp"

using namespace real;
using nlohmann::json;

namespace {

json sweep_json() {
  return json::parse(R"({
    "datasets": [{"name": "tiny", "synthetic": {"classes": 3, "dim": 4, "per_class": 40,
                  "spread": 3.0, "sigma": 1.0, "overlap": 0.2, "seed": 4}}],
    "strategies": ["real", "random"],
    "seeds": [{"data": 1, "model": 2, "strategy": 3}, 7],
    "base": {"rounds": 2, "budget": 8, "warmup": 6, "validation": 10, "test": 20, "clusters": 4,
             "model": {"kind": "softmax", "warmup_epochs": 2, "round_epochs": 1}}
  })");
}

std::vector<json> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

}  // namespace

TEST_CASE("config hash is stable and sensitive to content") {
  const auto configs = expand_sweep(sweep_json());
  REQUIRE(configs.size() == 4);
  const std::string h = config_hash(configs[0]);
  CHECK(h.size() == 16);
  CHECK(config_hash(config_from_json(config_to_json(configs[0]))) == h);
  CHECK(config_hash(configs[1]) != h);
  ExperimentConfig changed = configs[0];
  changed.budget += 1;
  CHECK(config_hash(changed) != h);
  // seeds given as a plain integer fill all three streams
  CHECK(configs[1].seed_data == 7);
  CHECK(configs[1].seed_model == 7);
  CHECK(configs[1].seed_strategy == 7);
}

TEST_CASE("report records carry exactly the documented fields") {
  const auto configs = expand_sweep(sweep_json());
  const ExperimentReport r = run_experiment(configs[0]);
  const auto records = report_records(r);
  REQUIRE(records.size() == 3);
  const std::vector<std::string> fields{"round", "acc", "f1_macro", "eps_q", "eps_pool", "lift", "loss0",
                                        "jsd_boundary", "n_labeled", "n_unlabeled", "strategy", "seed_data",
                                        "seed_model", "seed_strategy", "config_hash"};
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(records[t].size() == fields.size());
    for (const auto& f : fields) CHECK_MESSAGE(records[t].contains(f), f);
  }
  CHECK(records[2]["record"] == "summary");
  CHECK(records[2]["config"]["clusters"] == 4);
}

TEST_CASE("sweeps compute each config once and resume after deletions") {
  const auto dir = testing::scratch_dir("sweep");
  const auto configs = expand_sweep(sweep_json());
  SweepResult first = run_sweep(configs, dir);
  CHECK(first.computed == 4);
  CHECK(first.failed == 0);

  SweepResult again = run_sweep(configs, dir);
  CHECK(again.computed == 0);
  CHECK(again.skipped == 4);

  std::filesystem::remove(report_paths(dir, first.entries[2].hash).records);
  SweepResult resumed = run_sweep(configs, dir);
  CHECK(resumed.computed == 1);
  CHECK(resumed.entries[2].computed);

  // a truncated file counts as incomplete
  const auto path = report_paths(dir, first.entries[1].hash).records;
  const auto lines = read_lines(path);
  {
    std::ofstream out(path, std::ios::trunc);
    out << lines[0].dump() << '\n';
  }
  CHECK_FALSE(report_is_complete(path));
  CHECK(run_sweep(configs, dir).computed == 1);
  CHECK(read_lines(path).size() == 3);
}

TEST_CASE("a failing run does not stop the sweep") {
  const auto dir = testing::scratch_dir("sweep_fail");
  auto configs = expand_sweep(sweep_json());
  configs[0].dataset.synthetic.reset();
  configs[0].dataset.path = (dir / "missing.tsv").string();
  const SweepResult r = run_sweep(configs, dir);
  CHECK(r.failed == 1);
  CHECK(r.computed == 3);
  CHECK_FALSE(r.entries[0].error.empty());
}

TEST_CASE("written reports are byte-identical across reruns") {
  const auto a = testing::scratch_dir("det_a");
  const auto b = testing::scratch_dir("det_b");
  const auto config = expand_sweep(sweep_json())[0];
  const auto pa = write_report(run_experiment(config), a);
  const auto pb = write_report(run_experiment(config), b);
  std::ifstream fa(pa.records), fb(pb.records);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(std::filesystem::exists(pa.manifest));
}

TEST_CASE("summaries aggregate over seeds and mark absent cells") {
  const auto dir = testing::scratch_dir("summary");
  json sweep = sweep_json();
  run_sweep(expand_sweep(sweep), dir);
  // a second dataset with only one strategy
  sweep["datasets"][0]["name"] = "other";
  sweep["strategies"] = json::array({"random"});
  sweep["seeds"] = json::array({5});
  run_sweep(expand_sweep(sweep), dir);

  const SummaryTables t = summarize(dir);
  const auto rows = split(t.accuracy, '\n');
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "dataset\treal\treal_std\trandom\trandom_std");
  const auto other = split(rows[1], '\t');
  CHECK(other[0] == "other");
  CHECK(other[1] == kAbsentCell);
  CHECK(other[4] == "0.0000");  // single run: no spread

  // the tiny/real cell is the mean of its two runs
  double sum = 0.0;
  std::vector<double> values;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    const auto recs = read_lines(entry.path());
    const json& s = recs.back();
    if (s["dataset"] == "tiny" && s["strategy"] == "real") values.push_back(s["mean_acc"].get<double>());
  }
  REQUIRE(values.size() == 2);
  for (double v : values) sum += v;
  const auto tiny = split(rows[2], '\t');
  CHECK(std::abs(std::stod(tiny[1]) - sum / 2.0) <= 6e-5);  // 4-decimal rendering
  CHECK(std::abs(std::stod(tiny[2]) - std::abs(values[0] - values[1]) / std::sqrt(2.0)) <= 6e-5);

  CHECK(split(t.errors, '\n').size() == 4);
  CHECK(t.curves.find("tiny\treal\t3\t2\t") != std::string::npos);  // final evaluation row
  CHECK(summarize(dir).accuracy == t.accuracy);
}
