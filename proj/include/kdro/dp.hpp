#pragma once

#include <kdro/ambiguity.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdro {

/// `count` uniformly spaced points on [lo, hi], both endpoints included.
template <typename Scalar>
class StateGrid {
 public:
  StateGrid(Scalar lo, Scalar hi, Eigen::Index count) : lo_(lo), hi_(hi), count_(count) {
    if (count_ < 2) throw std::invalid_argument("StateGrid: at least two points required");
    if (!(lo_ < hi_)) throw std::invalid_argument("StateGrid: lo must be below hi");
  }

  Scalar lo() const { return lo_; }
  Scalar hi() const { return hi_; }
  Eigen::Index size() const { return count_; }
  Scalar step() const { return (hi_ - lo_) / Scalar(count_ - 1); }

  Scalar point(Eigen::Index i) const { return i == count_ - 1 ? hi_ : lo_ + Scalar(i) * step(); }

  Vector<Scalar> points() const {
    Vector<Scalar> p(count_);
    for (Eigen::Index i = 0; i < count_; ++i) p(i) = point(i);
    return p;
  }

  /// Index of the cell [point(i), point(i+1)] containing x, clamped to the grid.
  Eigen::Index cell(Scalar x) const {
    if (x <= lo_) return 0;
    if (x >= hi_) return count_ - 2;
    auto i = static_cast<Eigen::Index>(std::floor((x - lo_) / step()));
    i = std::clamp<Eigen::Index>(i, 0, count_ - 2);
    if (x < point(i)) --i;
    else if (i + 1 < count_ - 1 && x >= point(i + 1)) ++i;
    return std::clamp<Eigen::Index>(i, 0, count_ - 2);
  }

  /// Nearest grid index; equidistant points resolve to the lower one.
  Eigen::Index nearest(Scalar x) const {
    const Eigen::Index i = cell(x);
    if (x <= point(i)) return i;
    return (point(i + 1) - x) < (x - point(i)) ? i + 1 : i;
  }

 private:
  Scalar lo_, hi_;
  Eigen::Index count_;
};

/// Stage-indexed values on a grid. Zero outside [safe_lo, safe_hi].
template <typename Scalar>
struct ValueFunction {
  StateGrid<Scalar> grid;
  Vector<Scalar> values;
  Scalar safe_lo = -std::numeric_limits<Scalar>::infinity();
  Scalar safe_hi = std::numeric_limits<Scalar>::infinity();
  int stage = 0;

  bool in_safe_set(Scalar x) const { return x >= safe_lo && x <= safe_hi; }
};

/// Piecewise-linear interpolation of the stored values, 0 outside the safe set.
/// Beyond the grid ends the nearest end value is held.
template <typename Scalar>
Scalar interpolate(const ValueFunction<Scalar>& v, Scalar x) {
  if (!v.in_safe_set(x)) return Scalar(0);
  const auto& g = v.grid;
  const Eigen::Index i = g.cell(x);
  if (x <= g.point(i)) return v.values(i);
  if (x >= g.point(i + 1)) return v.values(i + 1);
  const Scalar t = (x - g.point(i)) / (g.point(i + 1) - g.point(i));
  return (Scalar(1) - t) * v.values(i) + t * v.values(i + 1);
}

template <typename Scalar>
Vector<Scalar> interpolate(const ValueFunction<Scalar>& v, VectorRef<Scalar> xs) {
  Vector<Scalar> out(xs.size());
  for (Eigen::Index i = 0; i < xs.size(); ++i) out(i) = interpolate(v, xs(i));
  return out;
}

/// One deterministic action per (stage, grid point); row l holds the decisions
/// of stage l, for l = 0 .. L-2.
template <typename Scalar>
struct PolicyTable {
  StateGrid<Scalar> grid;
  Vector<Scalar> actions;
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> choice;

  Eigen::Index stages() const { return choice.rows(); }
};

template <typename Scalar>
Scalar extract_policy_action(const PolicyTable<Scalar>& p, int stage, Scalar x) {
  if (stage < 0 || stage >= p.stages())
    throw std::invalid_argument("extract_policy_action: stage " + std::to_string(stage) + " outside [0, " +
                                std::to_string(p.stages()) + ")");
  return p.actions(p.choice(stage, p.grid.nearest(x)));
}

template <typename Scalar>
struct DpOptions {
  /// Ridge parameter of the value-function norm regression.
  Scalar lambda_norm = Scalar(200);
  /// Clamp safety values to [0, 1] after every stage.
  bool clip = true;
  /// Anchor points of the norm regression; empty means the DP grid.
  Vector<Scalar> norm_anchors;
};

template <typename Scalar>
struct DpResult {
  /// values[l] is v_l, l = 0 .. L-1.
  std::vector<ValueFunction<Scalar>> values;
  PolicyTable<Scalar> policy;
};

namespace detail {

template <typename Scalar>
void check_dp_inputs(VectorRef<Scalar> actions, const CmeEstimator<Scalar>& est, Scalar epsilon,
                     int horizon) {
  if (horizon < 1) throw std::invalid_argument("value iteration: horizon must be at least 1");
  if (actions.size() == 0) throw std::invalid_argument("value iteration: empty action list");
  if (epsilon < Scalar(0)) throw std::invalid_argument("value iteration: negative radius");
  if (est.state_dim() != 1) throw std::invalid_argument("value iteration: grid DP needs scalar states");
}

/// beta(x_i, a_j) for every grid point i and action j; column j * G + i.
template <typename Scalar>
Matrix<Scalar> weight_cache(const StateGrid<Scalar>& grid, VectorRef<Scalar> actions,
                            const CmeEstimator<Scalar>& est) {
  const Eigen::Index G = grid.size();
  PointSet<Scalar> queries(2, G * actions.size());
  for (Eigen::Index j = 0; j < actions.size(); ++j)
    for (Eigen::Index i = 0; i < G; ++i) {
      queries(0, j * G + i) = grid.point(i);
      queries(1, j * G + i) = actions(j);
    }
  return est.weights_batch(queries);
}

template <typename Scalar>
NormEstimator<Scalar> norm_estimator(const StateGrid<Scalar>& grid, const CmeEstimator<Scalar>& est,
                                     const DpOptions<Scalar>& options) {
  const Vector<Scalar> anchors = options.norm_anchors.size() > 0 ? options.norm_anchors : grid.points();
  return NormEstimator<Scalar>(anchors.transpose(), est.state_kernel(), options.lambda_norm);
}

/// Backward recursion shared by the safety and cost objectives.
/// `stage_value(x, a_index, center_minus_or_plus)` turns the robust expectation
/// into the candidate value; `better(a, b)` is strict improvement.
template <typename Scalar, typename Candidate, typename Better, typename Finish>
DpResult<Scalar> backward_recursion(const StateGrid<Scalar>& grid, VectorRef<Scalar> actions,
                                    const CmeEstimator<Scalar>& est, Scalar epsilon, int horizon,
                                    ValueFunction<Scalar> terminal, Direction direction,
                                    const DpOptions<Scalar>& options, Candidate candidate, Better better,
                                    Finish finish) {
  const Eigen::Index G = grid.size();
  const Eigen::Index M = actions.size();
  DpResult<Scalar> out{{}, PolicyTable<Scalar>{grid, actions, {}}};
  out.policy.choice.setZero(horizon - 1, G);
  out.values.resize(static_cast<std::size_t>(horizon), terminal);
  out.values.back() = std::move(terminal);
  if (horizon == 1) return out;

  const Matrix<Scalar> beta = weight_cache(grid, actions, est);
  const NormEstimator<Scalar> norm_of = norm_estimator(grid, est, options);
  const Vector<Scalar> next_states = est.dataset().next_states.row(0).transpose();
  const Vector<Scalar> anchors = norm_of.anchors().row(0).transpose();

  for (int l = horizon - 2; l >= 0; --l) {
    const ValueFunction<Scalar>& v_next = out.values[static_cast<std::size_t>(l) + 1];
    const Vector<Scalar> f_next = interpolate(v_next, next_states);
    const Scalar f_norm = norm_of(interpolate(v_next, anchors));

    ValueFunction<Scalar>& v = out.values[static_cast<std::size_t>(l)];
    v.stage = l;
    for (Eigen::Index i = 0; i < G; ++i) {
      const Scalar x = grid.point(i);
      int best_j = 0;
      Scalar best = 0;
      for (Eigen::Index j = 0; j < M; ++j) {
        const Scalar robust = robust_expectation<Scalar>(beta.col(j * G + i), f_next, f_norm, epsilon, direction);
        const Scalar value = candidate(x, j, robust);
        if (j == 0 || better(value, best)) {
          best = value;
          best_j = static_cast<int>(j);
        }
      }
      v.values(i) = finish(x, best);
      out.policy.choice(l, i) = best_j;
    }
  }
  return out;
}

}  // namespace detail

/// Robust maximal safety probability by backward recursion:
///   v_{L-1} = 1_S,  v_l(x) = 1_S(x) max_a inf_{mu in ball(x, a)} E_mu[v_{l+1}].
template <typename Scalar>
DpResult<Scalar> safety_value_iteration(const StateGrid<Scalar>& grid, VectorRef<Scalar> actions,
                                        const CmeEstimator<Scalar>& est, Scalar epsilon, int horizon, Scalar safe_lo,
                                        Scalar safe_hi, const DpOptions<Scalar>& options = {}) {
  detail::check_dp_inputs<Scalar>(actions, est, epsilon, horizon);
  if (!(safe_lo < safe_hi)) throw std::invalid_argument("safety_value_iteration: empty safe set");

  ValueFunction<Scalar> terminal{grid, Vector<Scalar>(grid.size()), safe_lo, safe_hi, horizon - 1};
  for (Eigen::Index i = 0; i < grid.size(); ++i) terminal.values(i) = terminal.in_safe_set(grid.point(i)) ? 1 : 0;

  return detail::backward_recursion<Scalar>(
      grid, actions, est, epsilon, horizon, std::move(terminal), Direction::Inf, options,
      [](Scalar, Eigen::Index, Scalar robust) { return robust; }, [](Scalar a, Scalar b) { return a > b; },
      [&](Scalar x, Scalar best) -> Scalar {
        if (x < safe_lo || x > safe_hi) return 0;
        return options.clip ? std::clamp(best, Scalar(0), Scalar(1)) : best;
      });
}

/// Robust cost-to-go:
///   v_{L-1} = terminal,  v_l(x) = min_a c(x, a) + sup_{mu in ball(x, a)} E_mu[v_{l+1}].
template <typename Scalar>
DpResult<Scalar> cost_value_iteration(const StateGrid<Scalar>& grid, VectorRef<Scalar> actions,
                                      const CmeEstimator<Scalar>& est, Scalar epsilon, int horizon,
                                      const std::function<Scalar(Scalar, Scalar)>& stage_cost,
                                      const std::function<Scalar(Scalar)>& terminal_cost,
                                      const DpOptions<Scalar>& options = {}) {
  detail::check_dp_inputs<Scalar>(actions, est, epsilon, horizon);

  ValueFunction<Scalar> terminal{grid, Vector<Scalar>(grid.size())};
  terminal.stage = horizon - 1;
  for (Eigen::Index i = 0; i < grid.size(); ++i) terminal.values(i) = terminal_cost(grid.point(i));

  return detail::backward_recursion<Scalar>(
      grid, actions, est, epsilon, horizon, std::move(terminal), Direction::Sup, options,
      [&](Scalar x, Eigen::Index j, Scalar robust) {
        const Scalar c = stage_cost(x, actions(j));
        if (!std::isfinite(static_cast<double>(c))) throw std::domain_error("cost_value_iteration: non-finite stage cost");
        return c + robust;
      },
      [](Scalar a, Scalar b) { return a < b; }, [](Scalar, Scalar best) { return best; });
}

}  // namespace kdro
