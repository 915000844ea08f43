// real-al: generate data, run active-learning experiments and sweeps, and
// summarize report directories into tab-separated comparison tables.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "real/alloop.hpp"
#include "real/dataset.hpp"
#include "real/report.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitContract = 2;

real::DatasetFormat format_for(const std::string& flag, const std::filesystem::path& path) {
  if (!flag.empty()) return real::parse_dataset_format(flag);
  return path.extension() == ".bin" ? real::DatasetFormat::Binary : real::DatasetFormat::Text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Representative-error active learning harness"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic Gaussian-mixture dataset");
  real::SyntheticSpec spec;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_format;
  gen->add_option("--classes", spec.num_classes, "Number of classes")->check(CLI::Range(2, 1 << 20));
  gen->add_option("--dim", spec.dim, "Feature dimension")->check(CLI::PositiveNumber);
  gen->add_option("--per-class", spec.points_per_class, "Points per class")->check(CLI::PositiveNumber);
  gen->add_option("--spread", spec.center_spread, "Distance between class means")->check(CLI::NonNegativeNumber);
  gen->add_option("--sigma", spec.noise_sigma, "Within-class standard deviation")->check(CLI::PositiveNumber);
  gen->add_option("--overlap", spec.overlap_fraction, "Fraction drawn from the neighbouring class")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output file")->required();
  gen->add_option("--format", gen_format, "text or binary (default: by extension)");

  // run
  auto* run = app.add_subcommand("run", "Run one active-learning experiment");
  real::ExperimentConfig cfg;
  std::string dataset_path, dataset_format, classifier = "softmax", out_dir = "reports";
  double learning_rate = 0.0;
  run->add_option("--dataset", dataset_path, "Dataset file")->required();
  run->add_option("--dataset-format", dataset_format, "text or binary (default: by extension)");
  run->add_option("--strategy", cfg.strategy, "Acquisition strategy")
      ->check(CLI::IsMember(real::strategy_names()));
  run->add_option("--rounds", cfg.rounds, "Active-learning rounds T")->check(CLI::PositiveNumber);
  run->add_option("--budget", cfg.budget, "Per-round budget b")->check(CLI::PositiveNumber);
  run->add_option("--warmup", cfg.warmup, "Warm-up labeled set size L")->check(CLI::PositiveNumber);
  run->add_option("--validation", cfg.validation, "Validation set size")->check(CLI::NonNegativeNumber);
  run->add_option("--test", cfg.test, "Test set size")->check(CLI::NonNegativeNumber);
  run->add_option("--clusters", cfg.clusters, "Clusters K")->check(CLI::PositiveNumber);
  run->add_option("--classifier", classifier, "softmax or mlp")->check(CLI::IsMember({"softmax", "mlp"}));
  run->add_option("--hidden", cfg.model.hidden_dim, "MLP hidden width")->check(CLI::PositiveNumber);
  run->add_option("--dropout", cfg.model.dropout_rate, "MLP dropout rate")->check(CLI::Range(0.0, 0.999));
  run->add_option("--lr", learning_rate, "Learning rate (default 0.1 softmax, 0.01 mlp)");
  run->add_option("--batch-size", cfg.model.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  run->add_option("--warmup-epochs", cfg.model.warmup_epochs, "Warm-up epochs");
  run->add_option("--round-epochs", cfg.model.round_epochs, "Epochs per round");
  run->add_option("--mc-passes", cfg.mc_passes, "MC-dropout passes for bald");
  run->add_option("--cal-neighbors", cfg.cal_neighbors, "Neighbours for cal");
  run->add_option("--actune-beta", cfg.actune_beta, "Uncertainty weight exponent for actune");
  run->add_flag("--retrain-scratch", cfg.retrain_from_scratch, "Retrain from scratch every round");
  run->add_option("--seed-data", cfg.seed_data, "Split seed");
  run->add_option("--seed-model", cfg.seed_model, "Model seed");
  run->add_option("--seed-strategy", cfg.seed_strategy, "Strategy seed");
  run->add_option("--out-dir", out_dir, "Report directory");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run a resumable grid of experiments");
  std::string sweep_config, sweep_out = "reports";
  sweep->add_option("--config", sweep_config, "Sweep JSON file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out-dir", sweep_out, "Report directory");

  // summarize
  auto* summarize = app.add_subcommand("summarize", "Aggregate a report directory into tables");
  std::string reports_dir, tables_dir;
  summarize->add_option("--reports", reports_dir, "Report directory")->required()->check(CLI::ExistingDirectory);
  summarize->add_option("--out-dir", tables_dir, "Write accuracy/f1_macro/errors/curves .tsv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitContract;
  }

  try {
    if (*gen) {
      const auto data = real::generate_synthetic(spec, gen_seed);
      real::write_dataset(data, gen_out, format_for(gen_format, gen_out));
      std::cout << gen_out << "\tn=" << data.size() << " d=" << data.dim() << " y=" << data.num_classes << '\n';
    } else if (*run) {
      cfg.dataset.path = dataset_path;
      cfg.dataset.format = format_for(dataset_format, dataset_path);
      cfg.dataset.name = std::filesystem::path(dataset_path).stem().string();
      cfg.model.kind = real::parse_model_kind(classifier);
      cfg.model.learning_rate = learning_rate > 0.0 ? learning_rate
                                : cfg.model.kind == real::ModelKind::Mlp ? real::kMlpDefaultLearningRate
                                                                         : real::kSoftmaxDefaultLearningRate;
      cfg.validate();
      const auto report = real::run_experiment(cfg);
      const auto paths = real::write_report(report, out_dir);
      std::cout << paths.records.string() << "\tclusters=" << cfg.clusters << "\tmean_acc=" << report.mean_accuracy
                << (report.exhausted ? "\texhausted" : "") << '\n';
    } else if (*sweep) {
      std::ifstream in(sweep_config);
      const auto configs = real::expand_sweep(nlohmann::json::parse(in));
      const auto result = real::run_sweep(configs, sweep_out, &std::cerr);
      std::cout << "computed=" << result.computed << " skipped=" << result.skipped
                << " failed=" << result.failed << '\n';
      if (result.failed > 0) return kExitRuntime;
    } else if (*summarize) {
      const auto tables = real::summarize(reports_dir);
      if (tables_dir.empty()) {
        std::cout << tables.accuracy << '\n' << tables.f1_macro << '\n' << tables.errors << '\n' << tables.curves;
      } else {
        std::filesystem::create_directories(tables_dir);
        const std::filesystem::path dir(tables_dir);
        std::ofstream(dir / "accuracy.tsv") << tables.accuracy;
        std::ofstream(dir / "f1_macro.tsv") << tables.f1_macro;
        std::ofstream(dir / "errors.tsv") << tables.errors;
        std::ofstream(dir / "curves.tsv") << tables.curves;
      }
    }
  } catch (const real::ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitContract;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad sweep config: " << e.what() << '\n';
    return kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
