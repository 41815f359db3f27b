#include <kdro/tcl.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace kdro::tcl {

double Params::alpha() const { return std::exp(-h / (C * R)); }

double Params::fixed_point(double a) const { return theta - eta * R * P * a; }

void Params::validate() const {
  if (!(R > 0)) throw std::invalid_argument("tcl: R must be positive");
  if (!(C > 0)) throw std::invalid_argument("tcl: C must be positive");
  if (!(h > 0)) throw std::invalid_argument("tcl: h must be positive");
  if (!(P > 0)) throw std::invalid_argument("tcl: P must be positive");
  if (!(eta > 0 && eta <= 1)) throw std::invalid_argument("tcl: eta must lie in (0, 1]");
  if (!(noise_std >= 0)) throw std::invalid_argument("tcl: noiseStd must be nonnegative");
  if (!(safe_lo < safe_hi)) throw std::invalid_argument("tcl: safeLo must be below safeHi");
}

double step(const Params& p, double x, double a, double omega) {
  const double alpha = p.alpha();
  return alpha * x + (1.0 - alpha) * p.fixed_point(a) + omega;
}

TransitionDataset<double> generate_dataset(const Params& p, Eigen::Index m, double state_lo, double state_hi,
                                           std::uint64_t seed) {
  p.validate();
  if (m < 1) throw std::invalid_argument("generate_dataset: m must be at least 1");
  if (!(state_lo < state_hi)) throw std::invalid_argument("generate_dataset: empty state range");

  TransitionDataset<double> data{PointSet<double>(1, m), Vector<double>(m), PointSet<double>(1, m)};
  Rng rng(seed);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double x = rng.uniform(state_lo, state_hi);
    const double a = (rng.next() >> 63) == 0 ? 0.0 : 1.0;
    const double omega = p.noise_std * rng.normal();
    data.states(0, i) = x;
    data.actions(i) = a;
    data.next_states(0, i) = step(p, x, a, omega);
  }
  return data;
}

double mc_safety_probability(const Params& p, const PolicyTable<double>& policy, double x0, int horizon,
                             std::size_t trajectories, std::uint64_t seed, const TrajectorySink& sink) {
  p.validate();
  if (horizon < 1) throw std::invalid_argument("mc_safety_probability: horizon must be at least 1");
  if (trajectories < 1) throw std::invalid_argument("mc_safety_probability: need at least one trajectory");
  if (policy.stages() < horizon - 1)
    throw std::invalid_argument("mc_safety_probability: policy covers fewer than horizon-1 stages");

  const Rng root(seed);
  std::size_t safe = 0;
  for (std::size_t t = 0; t < trajectories; ++t) {
    Rng rng = root.split(t);
    double x = x0;
    bool ok = true;
    for (int k = 0; k < horizon; ++k) {
      if (!p.is_safe(x)) ok = false;
      if (k == horizon - 1) {
        if (sink) sink(t, k, x, std::numeric_limits<double>::quiet_NaN());
        break;
      }
      const double a = extract_policy_action(policy, k, x);
      if (sink) sink(t, k, x, a);
      // without a sink, a violation settles the outcome
      if (!ok && !sink) break;
      x = step(p, x, a, p.noise_std * rng.normal());
    }
    if (ok) ++safe;
  }
  return static_cast<double>(safe) / static_cast<double>(trajectories);
}

}  // namespace kdro::tcl
