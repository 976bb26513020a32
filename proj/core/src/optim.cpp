#include "distpred/optim.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace distpred {

namespace {

void project(Eigen::VectorXd& x, const Eigen::VectorXd* lo,
             const Eigen::VectorXd* hi) {
  if (lo) x = x.cwiseMax(*lo);
  if (hi) x = x.cwiseMin(*hi);
}

// Gradient with components pointing out of the box zeroed at active bounds.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& g,
                                   const Eigen::VectorXd* lo,
                                   const Eigen::VectorXd* hi) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (lo && x[i] <= (*lo)[i] && pg[i] > 0.0) pg[i] = 0.0;
    if (hi && x[i] >= (*hi)[i] && pg[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& fn, Eigen::VectorXd x0,
                           const LbfgsOptions& options,
                           const Eigen::VectorXd* lower,
                           const Eigen::VectorXd* upper) {
  LbfgsResult res;
  project(x0, lower, upper);
  const Eigen::Index n = x0.size();

  Eigen::VectorXd x = x0, grad(n);
  double f = fn(x, grad);
  ++res.evaluations;

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (int iter = 0; iter < options.max_iter; ++iter) {
    res.iterations = iter;
    const Eigen::VectorXd pg = projected_gradient(x, grad, lower, upper);
    if (pg.lpNorm<Eigen::Infinity>() < options.grad_tol) {
      res.converged = true;
      break;
    }

    // Two-loop recursion for the search direction.
    Eigen::VectorXd q = pg;
    std::vector<double> alpha(s_hist.size());
    for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alpha[k] - beta) * s_hist[k];
    }
    Eigen::VectorXd dir = -q;
    if (dir.dot(pg) >= 0.0) dir = -pg;  // not a descent direction: reset

    // Weak-Wolfe line search (bisection bracketing): the curvature
    // condition keeps s^T y positive so the memory stays well-posed.
    const double slope = dir.dot(grad);
    double t = 1.0, t_lo = 0.0;
    double t_hi = std::numeric_limits<double>::infinity();
    bool accepted = false;
    Eigen::VectorXd x_new(n), grad_new(n);
    double f_new = f;
    Eigen::VectorXd x_best(n), grad_best(n);
    double f_best = f;
    bool has_best = false;

    for (int ls = 0; ls < options.max_line_search; ++ls) {
      x_new = x + t * dir;
      project(x_new, lower, upper);
      if ((x_new - x).lpNorm<Eigen::Infinity>() <
          options.step_tol * (1.0 + x.lpNorm<Eigen::Infinity>()))
        break;
      f_new = fn(x_new, grad_new);
      ++res.evaluations;
      if (!std::isfinite(f_new) || f_new > f + 1e-4 * t * slope) {
        t_hi = t;
        t = 0.5 * (t_lo + t_hi);
        continue;
      }
      if (f_new < f_best) {
        f_best = f_new;
        x_best = x_new;
        grad_best = grad_new;
        has_best = true;
      }
      if (grad_new.dot(dir) < 0.9 * slope) {
        t_lo = t;
        t = std::isinf(t_hi) ? 2.0 * t : 0.5 * (t_lo + t_hi);
        continue;
      }
      accepted = true;
      break;
    }
    if (!accepted) {
      if (has_best) {
        // Sufficient decrease without curvature: take the point but leave
        // the memory untouched.
        x = std::move(x_best);
        grad = std::move(grad_best);
        f = f_best;
        continue;
      }
      if (!s_hist.empty()) {
        // Possibly a stale-memory direction; retry from steepest descent.
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        continue;
      }
      res.converged = pg.lpNorm<Eigen::Infinity>() < 1e2 * options.grad_tol;
      break;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    x = std::move(x_new);
    grad = std::move(grad_new);
    f = f_new;
  }

  res.x = std::move(x);
  res.f = f;
  return res;
}

}  // namespace distpred
