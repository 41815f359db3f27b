#pragma once

#include <kdro/kernels.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <string>

namespace kdro {

/// f(.) = sum_i c_i k(z_i, .), a finite expansion in the RKHS of `kernel`.
template <typename Scalar>
class RkhsFunction {
 public:
  RkhsFunction(Kernel<Scalar> kernel, PointSet<Scalar> points, Vector<Scalar> weights)
      : kernel_(std::move(kernel)), points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.cols() == 0) throw std::invalid_argument("RkhsFunction: empty expansion");
    if (points_.cols() != weights_.size()) throw std::invalid_argument("RkhsFunction: points/weights length mismatch");
  }

  const Kernel<Scalar>& kernel() const { return kernel_; }
  const PointSet<Scalar>& points() const { return points_; }
  const Vector<Scalar>& weights() const { return weights_; }
  Eigen::Index size() const { return weights_.size(); }

  Scalar operator()(VectorRef<Scalar> x) const {
    Scalar s = 0;
    for (Eigen::Index i = 0; i < size(); ++i) s += weights_(i) * kernel_(points_.col(i), x);
    return s;
  }
  Scalar operator()(Scalar x) const { return (*this)(Vector<Scalar>::Constant(1, x)); }

  /// Values at every column of `xs`.
  Vector<Scalar> evaluate(PointsRef<Scalar> xs) const {
    return cross_gram(kernel_, xs, points_) * weights_;
  }

 private:
  Kernel<Scalar> kernel_;
  PointSet<Scalar> points_;
  Vector<Scalar> weights_;
};

/// <f, g>_H = c^T K(z, w) d.
template <typename Scalar>
Scalar inner_product(const RkhsFunction<Scalar>& f, const RkhsFunction<Scalar>& g) {
  if (!(f.kernel() == g.kernel())) throw std::domain_error("inner_product: kernel mismatch");
  return f.weights().dot(cross_gram(f.kernel(), f.points(), g.points()) * g.weights());
}

/// Exact RKHS norm of a finite expansion.
template <typename Scalar>
Scalar norm(const RkhsFunction<Scalar>& f) {
  const Scalar sq = inner_product(f, f);
  return std::sqrt(std::max(sq, Scalar(0)));
}

/// Mean embedding of the empirical distribution: (1/m) sum_i k(x_i, .).
template <typename Scalar>
RkhsFunction<Scalar> empirical_embedding(const Kernel<Scalar>& kernel, PointsRef<Scalar> samples) {
  if (samples.cols() == 0) throw std::invalid_argument("empirical_embedding: empty sample list");
  const auto m = samples.cols();
  return RkhsFunction<Scalar>(kernel, samples, Vector<Scalar>::Constant(m, Scalar(1) / Scalar(m)));
}

/// E[f] under the distribution represented by `embedding`, via the reproducing
/// property: <f, embedding>_H.
template <typename Scalar>
Scalar expectation(const RkhsFunction<Scalar>& f, const RkhsFunction<Scalar>& embedding) {
  return inner_product(f, embedding);
}

/// Maximum mean discrepancy between two empirical distributions.
template <typename Scalar>
Scalar mmd(const Kernel<Scalar>& kernel, PointsRef<Scalar> P,
           PointsRef<Scalar> Q) {
  if (P.cols() == 0 || Q.cols() == 0) throw std::invalid_argument("mmd: empty sample list");
  const Scalar m = Scalar(P.cols());
  const Scalar n = Scalar(Q.cols());
  const Scalar pp = cross_gram(kernel, P, P).sum() / (m * m);
  const Scalar qq = cross_gram(kernel, Q, Q).sum() / (n * n);
  const Scalar pq = cross_gram(kernel, P, Q).sum() / (m * n);
  Scalar sq = pp + qq - Scalar(2) * pq;
  if (sq < Scalar(0)) {
    if (sq < Scalar(-1e-12)) throw NumericalError("mmd: squared distance is negative", static_cast<double>(sq));
    sq = 0;
  }
  return std::sqrt(sq);
}

/// Samples (x_i, a_i, x_i^+) drawn from the transition kernel. States are
/// columns; actions are scalars.
template <typename Scalar>
struct TransitionDataset {
  PointSet<Scalar> states;
  Vector<Scalar> actions;
  PointSet<Scalar> next_states;

  Eigen::Index size() const { return actions.size(); }

  void validate() const {
    if (actions.size() == 0) throw std::invalid_argument("TransitionDataset: empty");
    if (states.cols() != actions.size() || next_states.cols() != actions.size())
      throw std::invalid_argument("TransitionDataset: lists have different lengths");
    if (states.rows() != next_states.rows())
      throw std::invalid_argument("TransitionDataset: state and next-state dimensions differ");
  }
};

namespace detail {

template <typename Scalar>
Scalar smallest_eigenvalue(const Matrix<Scalar>& A) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace detail

/// Conditional mean embedding fitted by kernel ridge regression:
///   beta(x, a) = (K_Y + m lambda I)^{-1} k_y(x, a),
///   psi(x, a)  = sum_i beta_i(x, a) k_X(x_i^+, .).
/// The Cholesky factor of K_Y + m lambda I is computed once and reused.
template <typename Scalar>
class CmeEstimator {
 public:
  CmeEstimator(TransitionDataset<Scalar> data, Kernel<Scalar> joint_kernel, Kernel<Scalar> state_kernel, Scalar lambda)
      : data_(std::move(data)),
        joint_kernel_(std::move(joint_kernel)),
        state_kernel_(std::move(state_kernel)),
        lambda_(lambda) {
    data_.validate();
    if (!(lambda_ > Scalar(0))) throw std::invalid_argument("fit_cme: lambda must be positive");
    joint_ = joint_points<Scalar>(data_.states, data_.actions);

    const Scalar shift = Scalar(size()) * lambda_;
    Matrix<Scalar> A = gram(joint_kernel_, joint_).entries;
    A.diagonal().array() += shift;
    llt_.compute(A);
    if (llt_.info() != Eigen::Success) {
      // recover the unshifted Gram to report how far from PSD it is
      A.diagonal().array() -= shift;
      const Scalar lmin = detail::smallest_eigenvalue(A);
      throw NumericalError("fit_cme: K_Y + m*lambda*I is not positive definite (smallest Gram eigenvalue " +
                               std::to_string(static_cast<double>(lmin)) + ")",
                           static_cast<double>(lmin));
    }

    // Residual check on the first in-sample query.
    const Vector<Scalar> b = A.col(0) - shift * Vector<Scalar>::Unit(size(), 0);
    const Vector<Scalar> beta = llt_.solve(b);
    const Scalar res = (A * beta - b).norm();
    if (res > Scalar(1e-8) * std::max(b.norm(), Scalar(1)))
      throw NumericalError("fit_cme: factorization residual too large", static_cast<double>(res));
  }

  const TransitionDataset<Scalar>& dataset() const { return data_; }
  const Kernel<Scalar>& joint_kernel() const { return joint_kernel_; }
  const Kernel<Scalar>& state_kernel() const { return state_kernel_; }
  Scalar lambda() const { return lambda_; }
  Eigen::Index size() const { return data_.size(); }
  Eigen::Index state_dim() const { return data_.states.rows(); }
  /// Joint (state, action) sample columns the Gram K_Y is built on.
  const PointSet<Scalar>& joint_samples() const { return joint_; }

  /// k_y(x, a)_i = k_Y((x_i, a_i), (x, a)).
  Vector<Scalar> feature_vector(VectorRef<Scalar> x, Scalar a) const {
    return cross_gram(joint_kernel_, joint_, make_query(x, a)).col(0);
  }

  Vector<Scalar> weights(VectorRef<Scalar> x, Scalar a) const {
    return llt_.solve(feature_vector(x, a));
  }
  Vector<Scalar> weights(Scalar x, Scalar a) const { return weights(Vector<Scalar>::Constant(1, x), a); }

  /// Weights for many joint queries at once; column j answers queries.col(j).
  Matrix<Scalar> weights_batch(PointsRef<Scalar> joint_queries) const {
    return llt_.solve(cross_gram(joint_kernel_, joint_, joint_queries));
  }

  /// (K_Y + m lambda I) beta, for residual checks.
  Vector<Scalar> apply_regularized_gram(VectorRef<Scalar> beta) const {
    return llt_.matrixL() * (llt_.matrixU() * beta);
  }

  /// The center of the ambiguity ball at (x, a) as an explicit expansion.
  RkhsFunction<Scalar> embedding(VectorRef<Scalar> x, Scalar a) const {
    return RkhsFunction<Scalar>(state_kernel_, data_.next_states, weights(x, a));
  }

 private:
  PointSet<Scalar> make_query(VectorRef<Scalar> x, Scalar a) const {
    if (x.size() != state_dim()) throw std::domain_error("cme query: state dimension mismatch");
    PointSet<Scalar> q(state_dim() + 1, 1);
    q.col(0).head(state_dim()) = x;
    q(state_dim(), 0) = a;
    return q;
  }

  TransitionDataset<Scalar> data_;
  Kernel<Scalar> joint_kernel_;
  Kernel<Scalar> state_kernel_;
  Scalar lambda_;
  PointSet<Scalar> joint_;
  Eigen::LLT<Matrix<Scalar>> llt_;
};

template <typename Scalar>
CmeEstimator<Scalar> fit_cme(TransitionDataset<Scalar> data, Kernel<Scalar> joint_kernel, Kernel<Scalar> state_kernel,
                             Scalar lambda) {
  return CmeEstimator<Scalar>(std::move(data), std::move(joint_kernel), std::move(state_kernel), lambda);
}

template <typename Scalar>
Vector<Scalar> cme_weights(const CmeEstimator<Scalar>& est, VectorRef<Scalar> x, Scalar a) {
  return est.weights(x, a);
}

/// RKHS norm of a function known only through its values at anchor points.
///
/// Regresses f onto span{k(x'_i, .)} with ridge `lambda`:
///   alpha = (K' + lambda I)^{-1} f(x'),  |f| ~ sqrt(alpha^T K' alpha).
/// The factorization depends only on the anchors, so one estimator serves
/// every value function over the same anchors.
template <typename Scalar>
class NormEstimator {
 public:
  NormEstimator(PointsRef<Scalar> anchors, const Kernel<Scalar>& kernel, Scalar lambda)
      : anchors_(anchors), lambda_(lambda) {
    if (anchors_.cols() == 0) throw std::invalid_argument("rkhs_norm: empty anchor list");
    if (!(lambda_ > Scalar(0))) throw std::invalid_argument("rkhs_norm: lambda must be positive");
    K_ = gram(kernel, anchors_).entries;
    Matrix<Scalar> A = K_;
    A.diagonal().array() += lambda_;
    llt_.compute(A);
    if (llt_.info() != Eigen::Success)
      throw NumericalError("rkhs_norm: K' + lambda I is not positive definite",
                           static_cast<double>(detail::smallest_eigenvalue(K_)));
  }

  const PointSet<Scalar>& anchors() const { return anchors_; }
  Scalar lambda() const { return lambda_; }

  Scalar operator()(VectorRef<Scalar> f_values) const {
    if (f_values.size() != anchors_.cols()) throw std::invalid_argument("rkhs_norm: one value per anchor required");
    const Vector<Scalar> alpha = llt_.solve(f_values);
    Scalar sq = alpha.dot(K_ * alpha);
    if (sq < Scalar(0)) {
      if (sq < Scalar(-1e-12)) throw NumericalError("rkhs_norm: negative quadratic form", static_cast<double>(sq));
      sq = 0;
    }
    return std::sqrt(sq);
  }

 private:
  PointSet<Scalar> anchors_;
  Scalar lambda_;
  Matrix<Scalar> K_;
  Eigen::LLT<Matrix<Scalar>> llt_;
};

template <typename Scalar>
Scalar rkhs_norm(VectorRef<Scalar> f_values, PointsRef<Scalar> anchors,
                 const Kernel<Scalar>& kernel, Scalar lambda) {
  if (f_values.size() != anchors.cols()) throw std::invalid_argument("rkhs_norm: one value per anchor required");
  return NormEstimator<Scalar>(anchors, kernel, lambda)(f_values);
}

}  // namespace kdro
