#pragma once

#include <kdro/tcl.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace kdro {

/// Everything needed to reproduce the TCL safety study. Defaults are the
/// case-study configuration.
struct ExperimentConfig {
  tcl::Params tcl;
  double gamma = 100.0;
  double lambda = 200.0;
  double lambda_norm = 200.0;
  Eigen::Index m = 7000;
  double data_lo = 19.0;
  double data_hi = 22.0;
  double grid_lo = 18.0;
  double grid_hi = 23.0;
  Eigen::Index grid_count = 35;
  double horizon_minutes = 90.0;
  std::vector<double> epsilons{0.0, 0.02, 0.05, 0.1};
  std::uint64_t seed = 1;
  bool clipping = true;
  std::filesystem::path output_dir = "out";
  std::vector<double> mc_probes{20.0, 20.5, 21.0};
  std::size_t mc_trajectories = 10000;

  /// L = horizonMinutes / (60 h).
  int stages() const;
  /// Every violated invariant, one message each; empty when valid.
  std::vector<std::string> violations() const;
};

struct ConfigResult {
  ExperimentConfig config;
  /// `<source>:<line>: message` (line omitted when the offending key came from defaults).
  std::vector<std::string> diagnostics;
  bool ok() const { return diagnostics.empty(); }
};

/// Parses `key = value` lines (`#` comments, dotted `tcl.*` keys). Omitted keys
/// keep their defaults. All problems are collected in one pass.
ConfigResult parse_config(std::istream& is, const std::string& source = "<config>");
ConfigResult validate_config(const std::filesystem::path& path);

/// Writes the full config back out in the same format.
std::string to_config_text(const ExperimentConfig& config);

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };
/// Reads KDRO_LOG (error|warn|info|debug); defaults to warn.
LogLevel log_level_from_env();

struct McCheckRow {
  double x0;
  double dp_value;
  double mc_probability;
};

struct RunReport {
  /// summary rows: (epsilon, x, v0)
  std::vector<std::vector<double>> summary;
  std::vector<McCheckRow> mc_check;
  std::vector<std::filesystem::path> files;
};

/// Dataset, CME fit, one safety DP per epsilon, Monte-Carlo check at epsilon = 0.
/// Writes dataset.csv, values_eps<e>.csv, policy_eps<e>.csv, summary.csv,
/// mc_check.csv and manifest.json into config.output_dir.
RunReport run_experiment(const ExperimentConfig& config, LogLevel level = LogLevel::Warn);

/// Dataset + fit + DP at one radius; shared by the `mc` subcommand and tests.
struct SolvedInstance {
  TransitionDataset<double> dataset;
  DpResult<double> dp;
};
SolvedInstance solve_instance(const ExperimentConfig& config, double epsilon);

/// Dataset and Monte-Carlo seeds derived from the experiment seed.
std::uint64_t dataset_seed(const ExperimentConfig& config);
std::uint64_t mc_seed(const ExperimentConfig& config);

}  // namespace kdro
