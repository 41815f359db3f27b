#include <doctest.h>

#include <kdro/dp.hpp>
#include <kdro/io.hpp>
#include <kdro/tcl.hpp>

#include "oracles.hpp"

#include <sstream>

using namespace kdro;
using K = Kernel<double>;

namespace {

Vector<double> binary_actions() { return (Vector<double>(2) << 0.0, 1.0).finished(); }

CmeEstimator<double> tcl_estimator(Eigen::Index m, double lambda, std::uint64_t seed) {
  tcl::Params p;
  return fit_cme(tcl::generate_dataset(p, m, 19.0, 22.0, seed), tcl_joint_kernel(100.0), K::gaussian(100.0), lambda);
}

std::vector<double> std_vec(const Eigen::Ref<const Vector<double>>& v) { return {v.data(), v.data() + v.size()}; }

std::size_t line_count(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("StateGrid") {
  const StateGrid<double> g(18.0, 23.0, 35);
  CHECK(g.point(0) == 18.0);
  CHECK(g.point(34) == 23.0);
  for (Eigen::Index i = 1; i < 35; ++i) CHECK(g.point(i) - g.point(i - 1) == doctest::Approx(5.0 / 34.0).epsilon(1e-12));
  CHECK_THROWS_AS(StateGrid<double>(0.0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(StateGrid<double>(1.0, 1.0, 5), std::invalid_argument);
}

TEST_CASE("interpolate examples") {
  const StateGrid<double> g(18.0, 23.0, 11);  // step 0.5
  ValueFunction<double> v{g, Vector<double>::Zero(11), 19.0, 22.0, 0};
  for (Eigen::Index i = 0; i < 11; ++i)
    if (v.in_safe_set(g.point(i))) v.values(i) = 0.1 * double(i);
  CHECK(interpolate(v, 20.5) == v.values(5));
  CHECK(interpolate(v, 25.0) == 0.0);
  CHECK(interpolate(v, 18.7) == 0.0);

  v.values(5) = 0.4;
  v.values(6) = 0.8;
  CHECK(interpolate(v, 20.75) == doctest::Approx(0.6).epsilon(1e-15));

  // stored zeros outside the safe set pull the edge cell down
  CHECK(interpolate(v, 19.0) == v.values(2));

  for (Eigen::Index i = 0; i < 11; ++i) CHECK(interpolate(v, g.point(i)) == (v.in_safe_set(g.point(i)) ? v.values(i) : 0.0));
}

TEST_CASE("interpolate matches the scanning oracle") {
  const StateGrid<double> g(18.0, 23.0, 35);
  ValueFunction<double> v{g, Vector<double>::Random(35).cwiseAbs(), 19.0, 22.0, 0};
  const auto grid = std_vec(g.points());
  const auto vals = std_vec(v.values);
  for (int t = 0; t <= 1000; ++t) {
    const double x = 17.5 + 6.0 * t / 1000.0;
    CHECK(interpolate(v, x) == doctest::Approx(oracle::interp(grid, vals, 19.0, 22.0, x)).epsilon(1e-14));
  }
}

TEST_CASE("extract_policy_action") {
  const StateGrid<double> g(0.0, 4.0, 5);
  PolicyTable<double> p{g, (Vector<double>(3) << 10.0, 20.0, 30.0).finished(), {}};
  p.choice.resize(2, 5);
  p.choice << 0, 1, 2, 1, 0,  //
      2, 2, 2, 2, 2;
  CHECK(extract_policy_action(p, 0, 2.0) == 30.0);
  CHECK(extract_policy_action(p, 0, -3.0) == 10.0);
  CHECK(extract_policy_action(p, 0, 9.0) == 10.0);
  CHECK(extract_policy_action(p, 0, 1.5) == 20.0);  // tie -> lower point
  CHECK(extract_policy_action(p, 0, 1.51) == 30.0);
  CHECK(extract_policy_action(p, 1, 1.2) == 30.0);
  CHECK_THROWS_AS(extract_policy_action(p, 2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(extract_policy_action(p, -1, 1.0), std::invalid_argument);
}

TEST_CASE("safety: horizon 1 is the safe-set indicator") {
  const auto est = tcl_estimator(30, 1.0, 1);
  const StateGrid<double> g(18.0, 23.0, 35);
  const auto r = safety_value_iteration<double>(g, binary_actions(), est, 0.1, 1, 19.0, 22.0);
  REQUIRE(r.values.size() == 1);
  CHECK(r.policy.stages() == 0);
  for (Eigen::Index i = 0; i < 35; ++i)
    CHECK(r.values[0].values(i) == ((g.point(i) >= 19.0 && g.point(i) <= 22.0) ? 1.0 : 0.0));
}

TEST_CASE("safety: argument errors") {
  const auto est = tcl_estimator(10, 1.0, 2);
  const StateGrid<double> g(18.0, 23.0, 11);
  CHECK_THROWS_AS(safety_value_iteration<double>(g, binary_actions(), est, 0.0, 0, 19.0, 22.0), std::invalid_argument);
  CHECK_THROWS_AS(safety_value_iteration<double>(g, Vector<double>(0), est, 0.0, 3, 19.0, 22.0), std::invalid_argument);
  CHECK_THROWS_AS(safety_value_iteration<double>(g, binary_actions(), est, -0.1, 3, 19.0, 22.0), std::invalid_argument);
  CHECK_THROWS_AS(safety_value_iteration<double>(g, binary_actions(), est, 0.0, 3, 22.0, 19.0), std::invalid_argument);
}

TEST_CASE("safety: huge radius zeroes every non-terminal stage") {
  const auto est = tcl_estimator(60, 0.001, 3);
  const StateGrid<double> g(18.0, 23.0, 35);
  const auto r = safety_value_iteration<double>(g, binary_actions(), est, 1e3, 5, 19.0, 22.0);
  for (int l = 0; l < 4; ++l) CHECK(r.values[std::size_t(l)].values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("safety: single sample, two stages, by hand") {
  // One transition (20, 1) -> 20.3. v_1 = 1_S so v_1(20.3) = 1, and
  // v_0(x) = clip(max_a beta(x, a)) with beta = k_Y((20,1),(x,a)) / (k_Y((20,1),(20,1)) + lambda).
  TransitionDataset<double> d{PointSet<double>::Constant(1, 1, 20.0), Vector<double>::Constant(1, 1.0),
                              PointSet<double>::Constant(1, 1, 20.3)};
  const double lambda = 0.5;
  const auto est = fit_cme(d, tcl_joint_kernel(100.0), K::gaussian(100.0), lambda);
  const StateGrid<double> g(18.0, 23.0, 35);
  const auto r = safety_value_iteration<double>(g, binary_actions(), est, 0.0, 2, 19.0, 22.0);
  const double denom = oracle::tcl_joint(20.0, 1.0, 20.0, 1.0, 100.0) + lambda;
  for (Eigen::Index i = 0; i < 35; ++i) {
    const double x = g.point(i);
    double expected = 0;
    int best = 0;
    if (x >= 19.0 && x <= 22.0) {
      const double b0 = oracle::tcl_joint(20.0, 1.0, x, 0.0, 100.0) / denom;
      const double b1 = oracle::tcl_joint(20.0, 1.0, x, 1.0, 100.0) / denom;
      expected = std::clamp(std::max(b0, b1), 0.0, 1.0);
      best = b1 > b0 ? 1 : 0;
      CHECK(r.policy.choice(0, i) == best);
    }
    CHECK(r.values[0].values(i) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("safety: nominal recursion equals the plain empirical DP") {
  tcl::Params p;
  const auto d = tcl::generate_dataset(p, 100, 19.0, 22.0, 5);
  const double gamma = 100.0, lambda = 0.001;
  const auto est = fit_cme(d, tcl_joint_kernel(gamma), K::gaussian(gamma), lambda);
  const StateGrid<double> g(18.0, 23.0, 11);
  const auto r = safety_value_iteration<double>(g, binary_actions(), est, 0.0, 4, 19.0, 22.0);
  const auto expected = oracle::nominal_safety_dp(std_vec(g.points()), {0.0, 1.0}, std_vec(d.states.row(0).transpose()),
                                                  std_vec(d.actions), std_vec(d.next_states.row(0).transpose()), gamma,
                                                  lambda, 4, 19.0, 22.0);
  for (int l = 0; l < 4; ++l)
    for (Eigen::Index i = 0; i < 11; ++i)
      CHECK(std::abs(r.values[std::size_t(l)].values(i) - expected[std::size_t(l)][std::size_t(i)]) <= 1e-10);
}

TEST_CASE("safety: values non-increasing in epsilon, in [0,1], zero outside the safe set") {
  const auto est = tcl_estimator(150, 0.001, 7);
  const StateGrid<double> g(18.0, 23.0, 35);
  DpOptions<double> opt;
  opt.lambda_norm = 1.0;
  std::vector<DpResult<double>> runs;
  for (double eps : {0.0, 0.01, 0.05, 0.2}) runs.push_back(safety_value_iteration<double>(g, binary_actions(), est, eps, 6, 19.0, 22.0, opt));
  for (std::size_t k = 0; k < runs.size(); ++k)
    for (int l = 0; l < 6; ++l) {
      const auto& v = runs[k].values[std::size_t(l)];
      CHECK(v.values.minCoeff() >= 0.0);
      CHECK(v.values.maxCoeff() <= 1.0);
      for (Eigen::Index i = 0; i < 35; ++i) {
        if (!v.in_safe_set(g.point(i))) CHECK(v.values(i) == 0.0);
        if (k > 0) CHECK(runs[k - 1].values[std::size_t(l)].values(i) >= v.values(i) - 1e-8);
      }
    }
  // the sweep is not vacuous
  CHECK(runs.front().values[0].values.maxCoeff() > runs.back().values[0].values.maxCoeff());
}

TEST_CASE("safety: clipping can be disabled") {
  const auto est = tcl_estimator(60, 0.001, 8);
  const StateGrid<double> g(18.0, 23.0, 11);
  DpOptions<double> opt;
  opt.clip = false;
  opt.lambda_norm = 1e-3;
  const auto r = safety_value_iteration<double>(g, binary_actions(), est, 5.0, 3, 19.0, 22.0, opt);
  CHECK(r.values[0].values.minCoeff() < 0.0);
}

TEST_CASE("safety: one extra stage never raises the value when sum(beta) <= 1") {
  const auto est = tcl_estimator(80, 1.0, 9);
  const StateGrid<double> g(18.0, 23.0, 21);
  for (Eigen::Index i = 0; i < g.size(); ++i)
    for (double a : {0.0, 1.0}) REQUIRE(est.weights(g.point(i), a).sum() <= 1.0);
  const auto one = safety_value_iteration<double>(g, binary_actions(), est, 0.0, 1, 19.0, 22.0);
  const auto two = safety_value_iteration<double>(g, binary_actions(), est, 0.0, 2, 19.0, 22.0);
  for (Eigen::Index i = 0; i < g.size(); ++i) CHECK(two.values[0].values(i) <= one.values[0].values(i) + 1e-8);
}

TEST_CASE("cost: zero data gives the zero fixed point") {
  const auto est = tcl_estimator(30, 0.01, 10);
  const StateGrid<double> g(18.0, 23.0, 11);
  for (double eps : {0.0, 0.3, 4.0}) {
    const auto r = cost_value_iteration<double>(g, binary_actions(), est, eps, 4, [](double, double) { return 0.0; },
                                                [](double) { return 0.0; });
    for (const auto& v : r.values) CHECK(v.values.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("cost: degenerate ball gives the nominal min recursion") {
  const auto est = tcl_estimator(50, 0.01, 11);
  const StateGrid<double> g(18.0, 23.0, 11);
  const auto terminal = [](double x) { return (x - 20.5) * (x - 20.5); };
  const auto r = cost_value_iteration<double>(g, binary_actions(), est, 0.0, 2, [](double, double) { return 0.0; }, terminal);
  std::vector<double> tv;
  for (Eigen::Index i = 0; i < 11; ++i) tv.push_back(terminal(g.point(i)));
  const auto grid = std_vec(g.points());
  for (Eigen::Index i = 0; i < 11; ++i) {
    double best = 1e300;
    for (double a : {0.0, 1.0}) {
      const Vector<double> beta = est.weights(g.point(i), a);
      double s = 0;
      for (Eigen::Index k = 0; k < est.size(); ++k)
        s += beta(k) * oracle::interp(grid, tv, -1e300, 1e300, est.dataset().next_states(0, k));
      best = std::min(best, s);
    }
    CHECK(r.values[0].values(i) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("cost: two samples, two stages, by hand") {
  // Samples (0,0)->100 and (100,1)->50, grid {0, 100}, lambda = 1 so
  // K_Y + 2I = [[4,1],[1,16/3]]. Terminal f(x) = x/100 gives f(x^+) = [1, 0.5].
  // Norm anchors {0, 100} have K' = I, so |f| ~ |[0,1]| / (1 + 1) = 0.5.
  // beta at (0,0) = [29,6]/61, (0,1) = [25,22]/61, (100,0) = [10,21]/61, (100,1) = [6,37]/61.
  // With eps = 0.5 and c(x, a) = 0.1 a:
  //   v0(0)   = min(32/61 + 0.25, 36/61 + 0.25 + 0.1)     -> action 0
  //   v0(100) = min(20.5/61 + 0.25, 24.5/61 + 0.25 + 0.1) -> action 0
  TransitionDataset<double> d{(PointSet<double>(1, 2) << 0.0, 100.0).finished(), binary_actions(),
                              (PointSet<double>(1, 2) << 100.0, 50.0).finished()};
  const auto est = fit_cme(d, tcl_joint_kernel(100.0), K::gaussian(100.0), 1.0);
  const StateGrid<double> g(0.0, 100.0, 2);
  DpOptions<double> opt;
  opt.lambda_norm = 1.0;
  const auto r = cost_value_iteration<double>(g, binary_actions(), est, 0.5, 2, [](double, double a) { return 0.1 * a; },
                                              [](double x) { return x / 100.0; }, opt);
  CHECK(r.values[0].values(0) == doctest::Approx(32.0 / 61.0 + 0.25).epsilon(1e-13));
  CHECK(r.values[0].values(1) == doctest::Approx(20.5 / 61.0 + 0.25).epsilon(1e-13));
  CHECK(r.policy.choice(0, 0) == 0);
  CHECK(r.policy.choice(0, 1) == 0);
  CHECK(r.values[1].values(1) == 1.0);
}

TEST_CASE("cost: policy invariant under positive scaling of the continuation") {
  const auto est = tcl_estimator(70, 0.01, 12);
  const StateGrid<double> g(18.0, 23.0, 21);
  const auto terminal = [](double x) { return std::sin(3.0 * x); };
  for (double c : {0.1, 3.0, 40.0}) {
    const auto base = cost_value_iteration<double>(g, binary_actions(), est, 0.2, 2, [](double, double) { return 0.0; }, terminal);
    const auto scaled = cost_value_iteration<double>(g, binary_actions(), est, 0.2, 2, [](double, double) { return 0.0; },
                                                     [&](double x) { return c * terminal(x); });
    CHECK(base.policy.choice == scaled.policy.choice);
    CHECK((scaled.values[0].values - c * base.values[0].values).cwiseAbs().maxCoeff() <= 1e-10 * c);
  }
}

TEST_CASE("cost: non-finite stage cost is rejected") {
  const auto est = tcl_estimator(20, 0.01, 13);
  const StateGrid<double> g(18.0, 23.0, 5);
  CHECK_THROWS_AS(cost_value_iteration<double>(g, binary_actions(), est, 0.0, 2,
                                               [](double, double) { return std::numeric_limits<double>::infinity(); },
                                               [](double) { return 0.0; }),
                  std::domain_error);
}

TEST_CASE("custom norm anchors") {
  const auto est = tcl_estimator(60, 0.01, 14);
  const StateGrid<double> g(18.0, 23.0, 11);
  DpOptions<double> opt;
  opt.norm_anchors = Vector<double>::LinSpaced(40, 18.0, 23.0);
  const auto a = safety_value_iteration<double>(g, binary_actions(), est, 0.05, 3, 19.0, 22.0, opt);
  const auto b = safety_value_iteration<double>(g, binary_actions(), est, 0.05, 3, 19.0, 22.0);
  CHECK(a.values[0].values.size() == 11);
  CHECK((a.values[0].values - b.values[0].values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("value and policy csv schemas") {
  const auto est = tcl_estimator(40, 0.01, 15);
  const StateGrid<double> g(18.0, 23.0, 11);
  const auto r = safety_value_iteration<double>(g, binary_actions(), est, 0.0, 4, 19.0, 22.0);
  std::ostringstream vs, ps;
  io::write_values_csv(vs, r.values);
  io::write_policy_csv(ps, r.policy);
  CHECK(vs.str().rfind("stage,x,value\n", 0) == 0);
  CHECK(ps.str().rfind("stage,x,action\n", 0) == 0);
  CHECK(line_count(vs.str()) == 1 + 4 * 11);
  CHECK(line_count(ps.str()) == 1 + 3 * 11);
}
