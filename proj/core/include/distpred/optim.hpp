#ifndef DISTPRED_OPTIM_HPP
#define DISTPRED_OPTIM_HPP

#include <Eigen/Dense>
#include <functional>

namespace distpred {

// Objective callback: returns f(x) and fills grad (same size as x).
using Objective =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct LbfgsOptions {
  int max_iter = 200;
  int memory = 8;
  double grad_tol = 1e-7;   // sup-norm of (projected) gradient
  double step_tol = 1e-13;  // minimum relative step
  int max_line_search = 40;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

// Limited-memory BFGS minimizer with optional box constraints handled by
// projection. The callers keep hard constraints out of the box by optimizing
// transformed (log / scaled-logit) parameters; the box is a wide safety net
// against overflow.
LbfgsResult lbfgs_minimize(const Objective& fn, Eigen::VectorXd x0,
                           const LbfgsOptions& options = {},
                           const Eigen::VectorXd* lower = nullptr,
                           const Eigen::VectorXd* upper = nullptr);

}  // namespace distpred

#endif
