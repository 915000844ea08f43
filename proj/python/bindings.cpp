// Thin Python surface over the core: synthetic data, the allocation rule,
// pseudo labels, divergence and whole experiments. Configs and reports cross
// the boundary as JSON text.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "real/alloop.hpp"
#include "real/analysis.hpp"
#include "real/dataset.hpp"
#include "real/report.hpp"
#include "real/strategies.hpp"

namespace py = pybind11;

namespace {

py::tuple synthetic(int classes, int dim, int per_class, double spread, double sigma, double overlap,
                    std::uint64_t seed) {
  const real::SyntheticSpec spec{classes, dim, per_class, spread, sigma, overlap};
  const real::Dataset d = real::generate_synthetic(spec, seed);
  return py::make_tuple(d.features, d.labels);
}

// Budgets per cluster plus what is left for the complement stage.
py::tuple allocate(const std::vector<double>& densities, int budget) {
  std::vector<real::ClusterSummary> s(densities.size());
  for (std::size_t k = 0; k < densities.size(); ++k) {
    s[k].cluster_id = static_cast<int>(k);
    s[k].error_density = densities[k];
  }
  const int leftover = real::allocate_budgets(s, budget);
  std::vector<int> budgets;
  for (const auto& c : s) budgets.push_back(c.budget);
  return py::make_tuple(budgets, leftover);
}

std::string run(const std::string& config_json) {
  const auto config = real::config_from_json(nlohmann::json::parse(config_json));
  real::ExperimentReport report;
  {
    py::gil_scoped_release release;
    report = real::run_experiment(config);
  }
  std::string out;
  for (const auto& r : real::report_records(report)) out += r.dump() + '\n';
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.attr("__version__") = real::kToolVersion;
  m.def("strategy_names", &real::strategy_names);
  m.def("generate_synthetic", &synthetic, py::arg("classes"), py::arg("dim"), py::arg("per_class"),
        py::arg("spread"), py::arg("sigma"), py::arg("overlap"), py::arg("seed"));
  m.def("allocate_budgets", &allocate, py::arg("densities"), py::arg("budget"));
  m.def("pseudo_labels", &real::pseudo_label_instances, py::arg("probs"));
  m.def("jensen_shannon_bits", &real::jensen_shannon_bits, py::arg("p"), py::arg("q"));
  m.def("default_config_json", [] { return real::config_to_json(real::ExperimentConfig{}).dump(); });
  m.def("config_hash_json", [](const std::string& s) {
    return real::config_hash(real::config_from_json(nlohmann::json::parse(s)));
  });
  m.def("run_experiment_json", &run, py::arg("config_json"));
}
