#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "real/alloop.hpp"

namespace real {

inline constexpr const char* kToolVersion = "0.3.0";

nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);

/// FNV-1a 64 over the key-sorted compact JSON of the config, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// One record per round followed by a summary record (`"record": "summary"`).
std::vector<nlohmann::json> report_records(const ExperimentReport& report);

struct ReportPaths {
  std::filesystem::path records;   // <hash>.jsonl
  std::filesystem::path manifest;  // <hash>.manifest.json
};

ReportPaths report_paths(const std::filesystem::path& dir, const std::string& hash);

/// Writes records atomically (temp file + rename) and a manifest with
/// timestamps and per-round wall-clock times.
ReportPaths write_report(const ExperimentReport& report, const std::filesystem::path& dir);

/// True when `path` parses line by line and ends with a summary record.
bool report_is_complete(const std::filesystem::path& path);

struct SweepEntry {
  ExperimentConfig config;
  std::string hash;
  bool computed = false;
  std::string error;  // non-empty when the run failed
};

struct SweepResult {
  std::vector<SweepEntry> entries;
  std::size_t computed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

/// Cartesian product datasets x strategies x seeds over a `base` block.
std::vector<ExperimentConfig> expand_sweep(const nlohmann::json& sweep);

/// Runs every config whose report is missing or incomplete; failures are
/// recorded and do not stop the sweep.
SweepResult run_sweep(const std::vector<ExperimentConfig>& configs, const std::filesystem::path& dir,
                      std::ostream* log = nullptr);

struct SummaryTables {
  std::string accuracy;  // dataset x strategy, mean and std of per-run mean accuracy
  std::string f1_macro;
  std::string errors;    // eps(Q), eps(D_u), lift, loss0, boundary JSD
  std::string curves;    // per-round accuracy for plotting
};

inline constexpr const char* kAbsentCell = "-";

SummaryTables summarize(const std::filesystem::path& dir);

}  // namespace real
