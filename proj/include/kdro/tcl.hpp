#pragma once

#include <kdro/dp.hpp>
#include <kdro/rng.hpp>

#include <cstdint>
#include <functional>

namespace kdro::tcl {

/// First-order thermal model of a thermostatically controlled load:
///   x+ = alpha x + (1 - alpha)(theta - eta R P a) + w,  alpha = exp(-h / (C R)).
/// Defaults are the case-study values; w ~ N(0, noise_std^2).
struct Params {
  double R = 2.0;              // degC / kW
  double C = 2.0;              // kWh / degC
  double theta = 32.0;         // ambient, degC
  double h = 5.0 / 60.0;       // hours
  double P = 14.0;             // kW
  double eta = 0.7;
  double noise_std = 0.25;     // degC
  double safe_lo = 19.0;
  double safe_hi = 22.0;

  double alpha() const;
  /// Equilibrium temperature under constant action a.
  double fixed_point(double a) const;
  /// Throws std::invalid_argument listing the first violated constraint.
  void validate() const;
  bool is_safe(double x) const { return x >= safe_lo && x <= safe_hi; }
};

double step(const Params& p, double x, double a, double omega);

/// m i.i.d. transitions from (x, a) ~ U[state_lo, state_hi] x U{0, 1}.
TransitionDataset<double> generate_dataset(const Params& p, Eigen::Index m, double state_lo, double state_hi,
                                           std::uint64_t seed);

/// Called once per simulated step: (trajectory, k, x_k, a_k). a_k is NaN at the last step.
using TrajectorySink = std::function<void(std::size_t, int, double, double)>;

/// Fraction of `trajectories` closed-loop runs of length `horizon` from x0 that
/// stay in the safe set at every step k = 0 .. horizon-1. Trajectory t draws
/// its noise from Rng(seed).split(t), so the result is schedule-independent.
double mc_safety_probability(const Params& p, const PolicyTable<double>& policy, double x0, int horizon,
                             std::size_t trajectories, std::uint64_t seed, const TrajectorySink& sink = {});

}  // namespace kdro::tcl
