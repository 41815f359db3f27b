// Command-line runner for the TCL safety study.
//
//   kdro run --config <path> [--out <dir>] [--seed <u64>]
//   kdro validate --config <path>
//   kdro mc --config <path> --epsilon <r> --x0 <temp> --ntraj <n> [--trajectories <csv>]
//
// Log verbosity: KDRO_LOG=error|warn|info|debug.

#include <kdro/experiment.hpp>
#include <kdro/io.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

bool load(const std::string& path, kdro::ExperimentConfig& config) {
  const auto result = kdro::validate_config(path);
  for (const auto& d : result.diagnostics) std::cerr << d << '\n';
  if (!result.ok()) return false;
  config = result.config;
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel distributionally robust safety DP for a thermostatically controlled load"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "Generate data, solve the DP for every epsilon and write CSV artifacts");
  run->add_option("--config", config_path, "Config file")->required();
  auto* out_opt = run->add_option("--out", out_dir, "Output directory (overrides outputDir)");
  auto* seed_opt = run->add_option("--seed", seed, "Seed (overrides seed)");

  auto* validate = app.add_subcommand("validate", "Check a config file and print the resolved configuration");
  validate->add_option("--config", config_path, "Config file")->required();

  double epsilon = 0.0;
  double x0 = 0.0;
  std::size_t ntraj = 0;
  std::string traj_path;
  auto* mc = app.add_subcommand("mc", "Compare the DP value with closed-loop Monte-Carlo at one state");
  mc->add_option("--config", config_path, "Config file")->required();
  mc->add_option("--epsilon", epsilon, "Ambiguity radius")->required()->check(CLI::NonNegativeNumber);
  mc->add_option("--x0", x0, "Initial temperature")->required();
  mc->add_option("--ntraj", ntraj, "Number of trajectories")->required()->check(CLI::PositiveNumber);
  mc->add_option("--trajectories", traj_path, "Dump trajectories as CSV traj,k,x,a");

  CLI11_PARSE(app, argc, argv);

  kdro::ExperimentConfig config;
  if (!load(config_path, config)) return 2;

  try {
    if (*validate) {
      std::cout << kdro::to_config_text(config);
      return 0;
    }
    if (*run) {
      if (*out_opt) config.output_dir = out_dir;
      if (*seed_opt) config.seed = seed;
      const auto report = kdro::run_experiment(config, kdro::log_level_from_env());
      for (const auto& f : report.files) std::cout << f.string() << '\n';
      return 0;
    }
    if (*mc) {
      const auto solved = kdro::solve_instance(config, epsilon);
      std::ofstream traj;
      kdro::tcl::TrajectorySink sink;
      if (!traj_path.empty()) {
        traj.open(traj_path, std::ios::binary | std::ios::trunc);
        if (!traj) throw std::runtime_error("cannot write " + traj_path);
        traj << "traj,k,x,a\n";
        sink = [&traj](std::size_t t, int k, double x, double a) {
          traj << t << ',' << k << ',' << kdro::io::format_double(x) << ','
               << (std::isnan(a) ? std::string() : kdro::io::format_double(a)) << '\n';
        };
      }
      const double p = kdro::tcl::mc_safety_probability(config.tcl, solved.dp.policy, x0, config.stages(), ntraj,
                                                        kdro::mc_seed(config), sink);
      const double v0 = kdro::interpolate(solved.dp.values.front(), x0);
      std::cout << "epsilon,x0,dp_v0,mc_probability,ntraj\n"
                << kdro::io::format_double(epsilon) << ',' << kdro::io::format_double(x0) << ','
                << kdro::io::format_double(v0) << ',' << kdro::io::format_double(p) << ',' << ntraj << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "kdro: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
