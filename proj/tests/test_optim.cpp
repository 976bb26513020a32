#include <doctest.h>

#include <cmath>

#include "distpred/optim.hpp"

using namespace distpred;

TEST_CASE("minimizes a convex quadratic") {
  auto fn = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    Eigen::VectorXd target(3);
    target << 1.0, -2.0, 0.5;
    g = 2.0 * (x - target);
    return (x - target).squaredNorm();
  };
  const LbfgsResult res = lbfgs_minimize(fn, Eigen::VectorXd::Zero(3));
  CHECK(res.converged);
  CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res.x[1] == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK(res.x[2] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("minimizes Rosenbrock") {
  auto fn = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  LbfgsOptions opt;
  opt.max_iter = 500;
  const LbfgsResult res = lbfgs_minimize(fn, x0, opt);
  CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(res.x[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("respects box constraints") {
  auto fn = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    Eigen::VectorXd target(2);
    target << 5.0, -5.0;
    g = 2.0 * (x - target);
    return (x - target).squaredNorm();
  };
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(2, -1.0);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(2, 1.0);
  const LbfgsResult res =
      lbfgs_minimize(fn, Eigen::VectorXd::Zero(2), {}, &lo, &hi);
  CHECK(res.x[0] == doctest::Approx(1.0));
  CHECK(res.x[1] == doctest::Approx(-1.0));
  CHECK(res.converged);
}

TEST_CASE("iteration cap is honored") {
  auto fn = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = 2.0 * x;
    return x.squaredNorm() + 1.0;
  };
  LbfgsOptions opt;
  opt.max_iter = 3;
  const LbfgsResult res =
      lbfgs_minimize(fn, Eigen::VectorXd::Constant(4, 10.0), opt);
  CHECK(res.iterations <= 3);
}
