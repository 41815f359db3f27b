#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>

namespace kdro {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Points are stored column-wise: a (dim x count) matrix holds `count` inputs.
template <typename Scalar>
using PointSet = Matrix<Scalar>;

/// Non-deducing views, so that plain matrices bind without naming Scalar.
template <typename Scalar>
using PointsRef = const Eigen::Ref<const PointSet<std::type_identity_t<Scalar>>>&;
template <typename Scalar>
using VectorRef = const Eigen::Ref<const Vector<std::type_identity_t<Scalar>>>&;

/// Raised when a computation that should succeed for valid inputs breaks down
/// numerically (non-PSD Gram, strongly negative quadratic form, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double detail = 0.0)
      : std::runtime_error(what), detail_(detail) {}
  /// Smallest eigenvalue estimate, offending radicand, etc.
  double detail() const noexcept { return detail_; }

 private:
  double detail_;
};

/// Declarative description of a positive semidefinite kernel.
///
/// Leaves are the Gaussian kernel exp(-gamma |u - v|^2) and the cubic spline
/// kernel k1 on nonnegative scalars. Sum and Product combine two kernels on the
/// same input; StateAction splits a joint input (state..., action) and adds a
/// state kernel on the leading coordinates to an action kernel on the last one.
/// Instances are immutable and cheap to copy (shared tree).
template <typename Scalar>
class Kernel {
 public:
  struct Gaussian {
    Scalar gamma;
  };
  struct Spline1 {};
  struct Sum {
    Kernel left, right;
  };
  struct Product {
    Kernel left, right;
  };
  struct StateAction {
    Kernel state, action;
  };
  using Variant = std::variant<Gaussian, Spline1, Sum, Product, StateAction>;

  static Kernel gaussian(Scalar gamma) {
    if (!(gamma > Scalar(0)) || !std::isfinite(static_cast<double>(gamma)))
      throw std::invalid_argument("gaussian kernel: gamma must be positive and finite");
    return Kernel(Gaussian{gamma});
  }
  static Kernel spline1() { return Kernel(Spline1{}); }
  static Kernel sum(Kernel left, Kernel right) { return Kernel(Sum{std::move(left), std::move(right)}); }
  static Kernel product(Kernel left, Kernel right) {
    return Kernel(Product{std::move(left), std::move(right)});
  }
  static Kernel state_action(Kernel state, Kernel action) {
    return Kernel(StateAction{std::move(state), std::move(action)});
  }

  const Variant& variant() const { return *node_; }

  /// k(u, v). Throws std::domain_error when the inputs do not fit the kernel.
  Scalar operator()(VectorRef<Scalar> u, VectorRef<Scalar> v) const {
    if (u.size() != v.size())
      throw std::domain_error("kernel: input dimension mismatch (" + std::to_string(u.size()) + " vs " +
                              std::to_string(v.size()) + ")");
    return eval(u, v);
  }

  Scalar operator()(Scalar u, Scalar v) const {
    Vector<Scalar> uu(1), vv(1);
    uu(0) = u;
    vv(0) = v;
    return (*this)(uu, vv);
  }

  /// Structural equality.
  friend bool operator==(const Kernel& a, const Kernel& b) {
    if (a.node_ == b.node_) return true;
    return std::visit(
        [&](const auto& x) -> bool {
          using T = std::decay_t<decltype(x)>;
          const T* y = std::get_if<T>(b.node_.get());
          if (y == nullptr) return false;
          if constexpr (std::is_same_v<T, Gaussian>) {
            return x.gamma == y->gamma;
          } else if constexpr (std::is_same_v<T, Spline1>) {
            return true;
          } else if constexpr (std::is_same_v<T, StateAction>) {
            return x.state == y->state && x.action == y->action;
          } else {
            return x.left == y->left && x.right == y->right;
          }
        },
        *a.node_);
  }

  /// k1(a, b) = 1 + ab + ab min(a,b) - (a+b)/2 min(a,b)^2 + min(a,b)^3 / 3.
  static Scalar spline1_value(Scalar a, Scalar b) {
    if (a < Scalar(0) || b < Scalar(0)) throw std::domain_error("spline1 kernel: inputs must be nonnegative");
    const Scalar lo = std::min(a, b);
    const Scalar ab = a * b;
    return Scalar(1) + ab + ab * lo - (a + b) / Scalar(2) * lo * lo + lo * lo * lo / Scalar(3);
  }

  std::string describe() const {
    return std::visit(
        [](const auto& x) -> std::string {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Gaussian>) {
            return "gaussian(" + std::to_string(static_cast<double>(x.gamma)) + ")";
          } else if constexpr (std::is_same_v<T, Spline1>) {
            return "spline1";
          } else if constexpr (std::is_same_v<T, Sum>) {
            return "sum(" + x.left.describe() + ", " + x.right.describe() + ")";
          } else if constexpr (std::is_same_v<T, Product>) {
            return "product(" + x.left.describe() + ", " + x.right.describe() + ")";
          } else {
            return "state_action(" + x.state.describe() + ", " + x.action.describe() + ")";
          }
        },
        *node_);
  }

 private:
  explicit Kernel(Variant v) : node_(std::make_shared<const Variant>(std::move(v))) {}

  Scalar eval(VectorRef<Scalar> u, VectorRef<Scalar> v) const {
    return std::visit(
        [&](const auto& x) -> Scalar {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Gaussian>) {
            Scalar r = 0;
            for (Eigen::Index k = 0; k < u.size(); ++k) {
              const Scalar d = u(k) - v(k);
              r += d * d;
            }
            return std::exp(-x.gamma * r);
          } else if constexpr (std::is_same_v<T, Spline1>) {
            if (u.size() != 1) throw std::domain_error("spline1 kernel: scalar inputs required");
            return spline1_value(u(0), v(0));
          } else if constexpr (std::is_same_v<T, Sum>) {
            return x.left.eval(u, v) + x.right.eval(u, v);
          } else if constexpr (std::is_same_v<T, Product>) {
            return x.left.eval(u, v) * x.right.eval(u, v);
          } else {
            const Eigen::Index n = u.size() - 1;
            if (n < 1) throw std::domain_error("state_action kernel: input needs state and action coordinates");
            return x.state.eval(u.head(n), v.head(n)) + x.action.eval(u.tail(1), v.tail(1));
          }
        },
        *node_);
  }

  std::shared_ptr<const Variant> node_;
};

/// K(i, j) = k(X.col(i), Y.col(j)).
///
/// Composite kernels are assembled from their component matrices; every entry
/// matches a pointwise evaluation bit for bit.
template <typename Scalar>
Matrix<Scalar> cross_gram(const Kernel<Scalar>& kernel, PointsRef<Scalar> X,
                          PointsRef<Scalar> Y) {
  if (X.rows() != Y.rows()) throw std::domain_error("cross_gram: input dimension mismatch");
  using K = Kernel<Scalar>;
  return std::visit(
      [&](const auto& x) -> Matrix<Scalar> {
        using T = std::decay_t<decltype(x)>;
        Matrix<Scalar> out(X.cols(), Y.cols());
        if constexpr (std::is_same_v<T, typename K::Gaussian>) {
          for (Eigen::Index j = 0; j < Y.cols(); ++j) {
            for (Eigen::Index i = 0; i < X.cols(); ++i) {
              Scalar r = 0;
              for (Eigen::Index k = 0; k < X.rows(); ++k) {
                const Scalar d = X(k, i) - Y(k, j);
                r += d * d;
              }
              out(i, j) = std::exp(-x.gamma * r);
            }
          }
        } else if constexpr (std::is_same_v<T, typename K::Spline1>) {
          if (X.rows() != 1) throw std::domain_error("spline1 kernel: scalar inputs required");
          for (Eigen::Index j = 0; j < Y.cols(); ++j)
            for (Eigen::Index i = 0; i < X.cols(); ++i) out(i, j) = K::spline1_value(X(0, i), Y(0, j));
        } else if constexpr (std::is_same_v<T, typename K::Sum>) {
          out = cross_gram(x.left, X, Y) + cross_gram(x.right, X, Y);
        } else if constexpr (std::is_same_v<T, typename K::Product>) {
          out = cross_gram(x.left, X, Y).cwiseProduct(cross_gram(x.right, X, Y));
        } else {
          const Eigen::Index n = X.rows() - 1;
          if (n < 1) throw std::domain_error("state_action kernel: input needs state and action coordinates");
          out = cross_gram(x.state, X.topRows(n), Y.topRows(n)) + cross_gram(x.action, X.bottomRows(1), Y.bottomRows(1));
        }
        return out;
      },
      kernel.variant());
}

/// Gram matrix over a point set, together with the points it was built from.
template <typename Scalar>
struct GramMatrix {
  Matrix<Scalar> entries;
  PointSet<Scalar> points;
};

template <typename Scalar>
GramMatrix<Scalar> gram(const Kernel<Scalar>& kernel, PointsRef<Scalar> points) {
  if (points.cols() == 0) throw std::invalid_argument("gram: empty point list");
  return {cross_gram(kernel, points, points), points};
}

/// Packs scalar states and actions into joint (state, action) columns.
template <typename Scalar>
PointSet<Scalar> joint_points(PointsRef<Scalar> states,
                              VectorRef<Scalar> actions) {
  if (states.cols() != actions.size()) throw std::invalid_argument("joint_points: length mismatch");
  PointSet<Scalar> out(states.rows() + 1, states.cols());
  out.topRows(states.rows()) = states;
  out.bottomRows(1) = actions.transpose();
  return out;
}

/// Joint kernel of the TCL experiment: exp(-gamma |x - x'|^2) + k1(a, a').
template <typename Scalar>
Kernel<Scalar> tcl_joint_kernel(Scalar gamma) {
  return Kernel<Scalar>::state_action(Kernel<Scalar>::gaussian(gamma), Kernel<Scalar>::spline1());
}

}  // namespace kdro
