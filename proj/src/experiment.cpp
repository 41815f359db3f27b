#include <kdro/experiment.hpp>
#include <kdro/io.hpp>
#include <kdro/version.hpp>

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace kdro {

namespace {

struct Issue {
  std::string key;
  std::string message;
};

std::vector<Issue> check(const ExperimentConfig& c) {
  std::vector<Issue> out;
  const auto& t = c.tcl;
  if (!(t.R > 0)) out.push_back({"tcl.R", "tcl.R must be positive"});
  if (!(t.C > 0)) out.push_back({"tcl.C", "tcl.C must be positive"});
  if (!(t.h > 0)) out.push_back({"tcl.h", "tcl.h must be positive"});
  if (!(t.P > 0)) out.push_back({"tcl.P", "tcl.P must be positive"});
  if (!(t.eta > 0 && t.eta <= 1)) out.push_back({"tcl.eta", "tcl.eta must lie in (0, 1]"});
  if (!(t.noise_std >= 0)) out.push_back({"tcl.noiseStd", "tcl.noiseStd must be nonnegative"});
  if (!(t.safe_lo < t.safe_hi)) out.push_back({"tcl.safeHi", "tcl.safeLo must be below tcl.safeHi"});
  if (!(c.gamma > 0)) out.push_back({"gamma", "gamma must be positive"});
  if (!(c.lambda > 0)) out.push_back({"lambda", "lambda must be positive"});
  if (!(c.lambda_norm > 0)) out.push_back({"lambdaNorm", "lambdaNorm must be positive"});
  if (c.m < 1) out.push_back({"m", "m must be at least 1"});
  if (!(c.data_lo < c.data_hi)) out.push_back({"dataHi", "dataLo must be below dataHi"});
  if (!(c.grid_lo < c.grid_hi)) out.push_back({"gridHi", "gridLo must be below gridHi"});
  if (c.grid_count < 2) out.push_back({"gridCount", "gridCount must be at least 2"});
  if (t.h > 0) {
    const double steps = c.horizon_minutes / (60.0 * t.h);
    const double rounded = std::round(steps);
    if (!(std::abs(steps - rounded) <= 1e-9) || rounded < 1)
      out.push_back({"horizonMinutes", "horizonMinutes must be a positive multiple of 60*tcl.h minutes (got " +
                                           io::format_double(steps) + " steps)"});
  }
  if (c.epsilons.empty()) out.push_back({"epsilons", "epsilons must be nonempty"});
  for (double e : c.epsilons)
    if (!(e >= 0)) {
      out.push_back({"epsilons", "epsilons must be nonnegative"});
      break;
    }
  for (std::size_t i = 1; i < c.epsilons.size(); ++i)
    if (!(c.epsilons[i] > c.epsilons[i - 1])) {
      out.push_back({"epsilons", "epsilons must be strictly increasing"});
      break;
    }
  if (c.mc_trajectories < 1) out.push_back({"mcTrajectories", "mcTrajectories must be at least 1"});
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_plain(const std::string& s) {
  double v = 0;
  const char* first = s.data();
  const char* last = first + s.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
  return v;
}

/// Decimal number or a ratio `a/b`.
double parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (const auto slash = s.find('/'); slash != std::string::npos) {
    const auto num = parse_plain(trim(s.substr(0, slash)));
    const auto den = parse_plain(trim(s.substr(slash + 1)));
    if (!num || !den || *den == 0) throw std::invalid_argument("not a number: '" + s + "'");
    return *num / *den;
  }
  const auto v = parse_plain(s);
  if (!v) throw std::invalid_argument("not a number: '" + s + "'");
  return *v;
}

template <typename Int>
Int parse_integer(const std::string& raw) {
  const std::string s = trim(raw);
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw std::invalid_argument("not an integer: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "on" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "off" || s == "0" || s == "no") return false;
  throw std::invalid_argument("not a boolean: '" + s + "'");
}

std::vector<double> parse_list(const std::string& raw) {
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw std::invalid_argument("unterminated list: '" + s + "'");
    s = trim(s.substr(1, s.size() - 2));
  }
  std::vector<double> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number(item));
  return out;
}

std::string list_text(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + io::format_double(xs[i]);
  return s;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"tcl.R", [](auto& c, const auto& v) { c.tcl.R = parse_number(v); }},
      {"tcl.C", [](auto& c, const auto& v) { c.tcl.C = parse_number(v); }},
      {"tcl.theta", [](auto& c, const auto& v) { c.tcl.theta = parse_number(v); }},
      {"tcl.h", [](auto& c, const auto& v) { c.tcl.h = parse_number(v); }},
      {"tcl.P", [](auto& c, const auto& v) { c.tcl.P = parse_number(v); }},
      {"tcl.eta", [](auto& c, const auto& v) { c.tcl.eta = parse_number(v); }},
      {"tcl.noiseStd", [](auto& c, const auto& v) { c.tcl.noise_std = parse_number(v); }},
      {"tcl.safeLo", [](auto& c, const auto& v) { c.tcl.safe_lo = parse_number(v); }},
      {"tcl.safeHi", [](auto& c, const auto& v) { c.tcl.safe_hi = parse_number(v); }},
      {"gamma", [](auto& c, const auto& v) { c.gamma = parse_number(v); }},
      {"lambda", [](auto& c, const auto& v) { c.lambda = parse_number(v); }},
      {"lambdaNorm", [](auto& c, const auto& v) { c.lambda_norm = parse_number(v); }},
      {"m", [](auto& c, const auto& v) { c.m = parse_integer<Eigen::Index>(v); }},
      {"dataLo", [](auto& c, const auto& v) { c.data_lo = parse_number(v); }},
      {"dataHi", [](auto& c, const auto& v) { c.data_hi = parse_number(v); }},
      {"gridLo", [](auto& c, const auto& v) { c.grid_lo = parse_number(v); }},
      {"gridHi", [](auto& c, const auto& v) { c.grid_hi = parse_number(v); }},
      {"gridCount", [](auto& c, const auto& v) { c.grid_count = parse_integer<Eigen::Index>(v); }},
      {"horizonMinutes", [](auto& c, const auto& v) { c.horizon_minutes = parse_number(v); }},
      {"epsilons", [](auto& c, const auto& v) { c.epsilons = parse_list(v); }},
      {"seed", [](auto& c, const auto& v) { c.seed = parse_integer<std::uint64_t>(v); }},
      {"clipping", [](auto& c, const auto& v) { c.clipping = parse_bool(v); }},
      {"outputDir", [](auto& c, const auto& v) { c.output_dir = trim(v); }},
      {"mcProbes", [](auto& c, const auto& v) { c.mc_probes = parse_list(v); }},
      {"mcTrajectories", [](auto& c, const auto& v) { c.mc_trajectories = parse_integer<std::size_t>(v); }},
  };
  return table;
}

class Logger {
 public:
  explicit Logger(LogLevel level) : level_(level) {}
  void info(const std::string& msg) const { emit(LogLevel::Info, "info", msg); }
  void debug(const std::string& msg) const { emit(LogLevel::Debug, "debug", msg); }

 private:
  void emit(LogLevel at, const char* tag, const std::string& msg) const {
    if (static_cast<int>(level_) >= static_cast<int>(at)) std::cerr << "[kdro " << tag << "] " << msg << '\n';
  }
  LogLevel level_;
};

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

CmeEstimator<double> fit(const ExperimentConfig& config, TransitionDataset<double> data) {
  return fit_cme<double>(std::move(data), tcl_joint_kernel(config.gamma), Kernel<double>::gaussian(config.gamma),
                         config.lambda);
}

DpResult<double> solve(const ExperimentConfig& config, const CmeEstimator<double>& est, double epsilon) {
  const StateGrid<double> grid(config.grid_lo, config.grid_hi, config.grid_count);
  Vector<double> actions(2);
  actions << 0.0, 1.0;
  DpOptions<double> options;
  options.lambda_norm = config.lambda_norm;
  options.clip = config.clipping;
  try {
    return safety_value_iteration<double>(grid, actions, est, epsilon, config.stages(), config.tcl.safe_lo,
                                          config.tcl.safe_hi, options);
  } catch (const NumericalError& e) {
    throw NumericalError("epsilon " + io::format_double(epsilon) + ": " + e.what(), e.detail());
  }
}

void require_valid(const ExperimentConfig& config) {
  const auto v = config.violations();
  if (!v.empty()) throw std::invalid_argument("invalid config: " + v.front());
}

}  // namespace

int ExperimentConfig::stages() const { return static_cast<int>(std::lround(horizon_minutes / (60.0 * tcl.h))); }

std::vector<std::string> ExperimentConfig::violations() const {
  std::vector<std::string> out;
  for (const auto& issue : check(*this)) out.push_back(issue.message);
  return out;
}

ConfigResult parse_config(std::istream& is, const std::string& source) {
  ConfigResult result;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  auto report = [&](std::size_t at, const std::string& msg) {
    result.diagnostics.push_back(source + ":" + std::to_string(at) + ": " + msg);
  };

  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      report(lineno, "expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      report(lineno, "unknown key '" + key + "'");
      continue;
    }
    if (const auto prev = seen.find(key); prev != seen.end()) {
      report(lineno, "duplicate key '" + key + "' (first set on line " + std::to_string(prev->second) + ")");
      continue;
    }
    seen[key] = lineno;
    try {
      it->second(result.config, value);
    } catch (const std::exception& e) {
      report(lineno, key + ": " + e.what());
    }
  }

  for (const auto& issue : check(result.config)) {
    const auto at = seen.find(issue.key);
    if (at != seen.end())
      report(at->second, issue.message);
    else
      result.diagnostics.push_back(source + ": " + issue.message);
  }
  return result;
}

ConfigResult validate_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    ConfigResult r;
    r.diagnostics.push_back(path.string() + ": cannot read file");
    return r;
  }
  return parse_config(is, path.string());
}

std::string to_config_text(const ExperimentConfig& c) {
  std::ostringstream os;
  const auto num = [](double x) { return io::format_double(x); };
  os << "tcl.R = " << num(c.tcl.R) << '\n'
     << "tcl.C = " << num(c.tcl.C) << '\n'
     << "tcl.theta = " << num(c.tcl.theta) << '\n'
     << "tcl.h = " << num(c.tcl.h) << '\n'
     << "tcl.P = " << num(c.tcl.P) << '\n'
     << "tcl.eta = " << num(c.tcl.eta) << '\n'
     << "tcl.noiseStd = " << num(c.tcl.noise_std) << '\n'
     << "tcl.safeLo = " << num(c.tcl.safe_lo) << '\n'
     << "tcl.safeHi = " << num(c.tcl.safe_hi) << '\n'
     << "gamma = " << num(c.gamma) << '\n'
     << "lambda = " << num(c.lambda) << '\n'
     << "lambdaNorm = " << num(c.lambda_norm) << '\n'
     << "m = " << c.m << '\n'
     << "dataLo = " << num(c.data_lo) << '\n'
     << "dataHi = " << num(c.data_hi) << '\n'
     << "gridLo = " << num(c.grid_lo) << '\n'
     << "gridHi = " << num(c.grid_hi) << '\n'
     << "gridCount = " << c.grid_count << '\n'
     << "horizonMinutes = " << num(c.horizon_minutes) << '\n'
     << "epsilons = " << list_text(c.epsilons) << '\n'
     << "seed = " << c.seed << '\n'
     << "clipping = " << (c.clipping ? "true" : "false") << '\n'
     << "outputDir = " << c.output_dir.string() << '\n'
     << "mcProbes = " << list_text(c.mc_probes) << '\n'
     << "mcTrajectories = " << c.mc_trajectories << '\n';
  return os.str();
}

LogLevel log_level_from_env() {
  const char* env = std::getenv("KDRO_LOG");
  if (env == nullptr) return LogLevel::Warn;
  const std::string s(env);
  if (s == "error") return LogLevel::Error;
  if (s == "info") return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  return LogLevel::Warn;
}

std::uint64_t dataset_seed(const ExperimentConfig& config) { return Rng::derive(config.seed, 0); }
std::uint64_t mc_seed(const ExperimentConfig& config) { return Rng::derive(config.seed, 1); }

SolvedInstance solve_instance(const ExperimentConfig& config, double epsilon) {
  require_valid(config);
  auto data = tcl::generate_dataset(config.tcl, config.m, config.data_lo, config.data_hi, dataset_seed(config));
  const auto est = fit(config, data);
  return {std::move(data), solve(config, est, epsilon)};
}

RunReport run_experiment(const ExperimentConfig& config, LogLevel level) {
  require_valid(config);
  const Logger log(level);
  RunReport report;
  nlohmann::json timings = nlohmann::json::object();
  std::filesystem::create_directories(config.output_dir);
  const auto path = [&](const std::string& name) {
    report.files.push_back(config.output_dir / name);
    return report.files.back();
  };

  auto t0 = std::chrono::steady_clock::now();
  auto data = tcl::generate_dataset(config.tcl, config.m, config.data_lo, config.data_hi, dataset_seed(config));
  {
    auto os = open_output(path("dataset.csv"));
    io::write_dataset_csv(os, data);
  }
  timings["dataset"] = seconds_since(t0);
  log.info("generated " + std::to_string(config.m) + " transitions");

  t0 = std::chrono::steady_clock::now();
  const auto est = fit(config, std::move(data));
  timings["fit_cme"] = seconds_since(t0);
  log.info("fitted conditional mean embedding");

  std::optional<DpResult<double>> nominal;
  nlohmann::json dp_times = nlohmann::json::object();
  for (double eps : config.epsilons) {
    t0 = std::chrono::steady_clock::now();
    auto dp = solve(config, est, eps);
    const std::string tag = io::format_double(eps);
    {
      auto os = open_output(path("values_eps" + tag + ".csv"));
      io::write_values_csv(os, dp.values);
    }
    {
      auto os = open_output(path("policy_eps" + tag + ".csv"));
      io::write_policy_csv(os, dp.policy);
    }
    const auto& v0 = dp.values.front();
    for (Eigen::Index i = 0; i < v0.grid.size(); ++i) report.summary.push_back({eps, v0.grid.point(i), v0.values(i)});
    dp_times[tag] = seconds_since(t0);
    log.info("solved epsilon " + tag);
    if (eps == 0.0) nominal = std::move(dp);
  }
  timings["dp"] = dp_times;
  {
    auto os = open_output(path("summary.csv"));
    os << "epsilon,x,v0\n";
    for (const auto& row : report.summary)
      os << io::format_double(row[0]) << ',' << io::format_double(row[1]) << ',' << io::format_double(row[2]) << '\n';
  }

  t0 = std::chrono::steady_clock::now();
  if (!nominal) nominal = solve(config, est, 0.0);
  for (double x0 : config.mc_probes) {
    const double mc = tcl::mc_safety_probability(config.tcl, nominal->policy, x0, config.stages(),
                                                 config.mc_trajectories, mc_seed(config));
    report.mc_check.push_back({x0, interpolate(nominal->values.front(), x0), mc});
  }
  {
    auto os = open_output(path("mc_check.csv"));
    os << "x0,dp_v0,mc_probability,abs_diff,ntraj\n";
    for (const auto& r : report.mc_check)
      os << io::format_double(r.x0) << ',' << io::format_double(r.dp_value) << ','
         << io::format_double(r.mc_probability) << ',' << io::format_double(std::abs(r.dp_value - r.mc_probability))
         << ',' << config.mc_trajectories << '\n';
  }
  timings["monte_carlo"] = seconds_since(t0);

  nlohmann::json manifest;
  manifest["library"] = "kdro";
  manifest["version"] = KDRO_VERSION;
  manifest["config"] = to_config_text(config);
  manifest["stages"] = config.stages();
  manifest["dataset_seed"] = dataset_seed(config);
  manifest["mc_seed"] = mc_seed(config);
  manifest["wall_clock_seconds"] = timings;
  manifest["mc_check_note"] =
      "DP v0 at epsilon = 0 is compared with closed-loop Monte-Carlo under the extracted policy. Expected "
      "sources of disagreement: state-grid discretization and nearest-point policy lookup, linear interpolation of "
      "v at off-grid next states, ridge shrinkage of the CME weights (sum of beta below 1 for large m*lambda), and "
      "the additive joint kernel's weak dependence on the state.";
  {
    auto os = open_output(config.output_dir / "manifest.json");
    os << manifest.dump(2) << '\n';
  }
  report.files.push_back(config.output_dir / "manifest.json");
  return report;
}

}  // namespace kdro
