#pragma once

#include <kdro/rkhs.hpp>
#include <kdro/rng.hpp>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <stdexcept>

namespace kdro {

enum class Direction { Sup, Inf };

/// Closed-form extremum of E_mu[f] over an MMD ball of radius `epsilon`
/// around the conditional mean embedding with weights `beta`:
///   Sup:  sum_i beta_i f(x_i^+) + epsilon |f|
///   Inf:  sum_i beta_i f(x_i^+) - epsilon |f|
template <typename Scalar>
Scalar robust_expectation(VectorRef<Scalar> beta,
                          VectorRef<Scalar> f_values_at_next_samples, Scalar f_norm,
                          Scalar epsilon, Direction direction) {
  if (beta.size() != f_values_at_next_samples.size())
    throw std::invalid_argument("worst_case_expectation: one value per next-state sample required");
  if (f_norm < Scalar(0)) throw std::invalid_argument("worst_case_expectation: negative norm");
  if (epsilon < Scalar(0)) throw std::invalid_argument("worst_case_expectation: negative radius");
  const Scalar center = beta.dot(f_values_at_next_samples);
  return direction == Direction::Sup ? center + epsilon * f_norm : center - epsilon * f_norm;
}

/// The MMD ball {mu : |Psi(mu) - psi(x, a)| <= epsilon}. Never materialized;
/// only queried through its support function.
template <typename Scalar>
class AmbiguityBall {
 public:
  AmbiguityBall(const CmeEstimator<Scalar>& est, Scalar epsilon, Vector<Scalar> x, Scalar a)
      : est_(&est), epsilon_(epsilon), x_(std::move(x)), a_(a), beta_(est.weights(x_, a_)) {
    if (epsilon_ < Scalar(0)) throw std::invalid_argument("AmbiguityBall: negative radius");
  }
  AmbiguityBall(const CmeEstimator<Scalar>& est, Scalar epsilon, Scalar x, Scalar a)
      : AmbiguityBall(est, epsilon, Vector<Scalar>::Constant(1, x), a) {}

  const CmeEstimator<Scalar>& estimator() const { return *est_; }
  Scalar epsilon() const { return epsilon_; }
  const Vector<Scalar>& state() const { return x_; }
  Scalar action() const { return a_; }
  const Vector<Scalar>& weights() const { return beta_; }
  RkhsFunction<Scalar> center() const { return RkhsFunction<Scalar>(est_->state_kernel(), est_->dataset().next_states, beta_); }

 private:
  const CmeEstimator<Scalar>* est_;
  Scalar epsilon_;
  Vector<Scalar> x_;
  Scalar a_;
  Vector<Scalar> beta_;
};

template <typename Scalar>
Scalar worst_case_expectation(const AmbiguityBall<Scalar>& ball,
                              VectorRef<Scalar> f_values_at_next_samples, Scalar f_norm,
                              Direction direction) {
  return robust_expectation<Scalar>(ball.weights(), f_values_at_next_samples, f_norm, ball.epsilon(), direction);
}

template <typename Scalar>
struct TightnessReport {
  bool passed = false;
  /// min over trials of (support value - <f, center + epsilon g>); negative means exceedance.
  Scalar worst_margin = std::numeric_limits<Scalar>::infinity();
  Scalar support_value = 0;
  Scalar maximizer_value = 0;
  std::size_t trials = 0;
};

/// Checks the closed-form support value against explicit ball members.
///
/// Random unit-norm g are built from random expansions normalized by their
/// exact Gram norm; none may beat the support value by more than `tol`, and
/// g* = f / |f| must attain it within `tol`.
template <typename Scalar>
TightnessReport<Scalar> support_tightness_check(const AmbiguityBall<Scalar>& ball, const RkhsFunction<Scalar>& f,
                                                std::size_t trials, std::uint64_t seed = 0, Scalar tol = Scalar(1e-8)) {
  const auto& est = ball.estimator();
  if (!(f.kernel() == est.state_kernel())) throw std::domain_error("support_tightness_check: kernel mismatch");
  const Scalar f_norm = norm(f);
  if (!(f_norm > Scalar(0))) throw std::invalid_argument("support_tightness_check: zero function has no maximizer");

  const RkhsFunction<Scalar> center = ball.center();
  const Vector<Scalar> f_at_next = f.evaluate(est.dataset().next_states);

  TightnessReport<Scalar> report;
  report.trials = trials;
  report.support_value = worst_case_expectation(ball, f_at_next, f_norm, Direction::Sup);
  const Scalar center_value = inner_product(f, center);

  Rng rng(seed);
  const auto& next = est.dataset().next_states;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng local = rng.split(t);
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(local.below(5));
    PointSet<Scalar> pts(next.rows(), k);
    Vector<Scalar> w(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto src = static_cast<Eigen::Index>(local.below(static_cast<std::uint64_t>(next.cols())));
      for (Eigen::Index r = 0; r < next.rows(); ++r) pts(r, j) = next(r, src) + Scalar(local.normal(0.0, 0.2));
      w(j) = Scalar(local.normal());
    }
    RkhsFunction<Scalar> g(est.state_kernel(), pts, w);
    const Scalar gn = norm(g);
    if (!(gn > Scalar(0))) continue;
    g = RkhsFunction<Scalar>(est.state_kernel(), pts, w / gn);
    const Scalar value = center_value + ball.epsilon() * inner_product(f, g);
    report.worst_margin = std::min(report.worst_margin, report.support_value - value);
  }

  const RkhsFunction<Scalar> g_star(f.kernel(), f.points(), f.weights() / f_norm);
  report.maximizer_value = center_value + ball.epsilon() * inner_product(f, g_star);
  const bool attains = std::abs(report.maximizer_value - report.support_value) <= tol;
  const bool bounded = trials == 0 || report.worst_margin >= -tol;
  report.passed = attains && bounded;
  return report;
}

}  // namespace kdro
