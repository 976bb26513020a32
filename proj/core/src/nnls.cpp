#include "distpred/nnls.hpp"

#include <Eigen/QR>
#include <cmath>
#include <limits>
#include <vector>

namespace distpred {

namespace {

Eigen::VectorXd solve_passive(const Eigen::MatrixXd& A,
                              const Eigen::VectorXd& b,
                              const std::vector<int>& passive) {
  Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(passive.size()));
  for (std::size_t k = 0; k < passive.size(); ++k)
    Ap.col(static_cast<Eigen::Index>(k)) = A.col(passive[k]);
  return Ap.colPivHouseholderQr().solve(b);
}

}  // namespace

Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                     double tol, int max_iter) {
  const int n = static_cast<int>(A.cols());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (n == 0) return x;

  Eigen::VectorXd w = A.transpose() * b;
  if (tol < 0.0)
    tol = 1e-10 * std::max(1.0, w.cwiseAbs().maxCoeff());
  if (max_iter < 0) max_iter = 3 * n + 30;

  std::vector<bool> in_passive(n, false);
  std::vector<int> passive;

  for (int iter = 0; iter < max_iter; ++iter) {
    // Most violated dual coordinate among active (zero-clamped) variables.
    int best = -1;
    double best_w = tol;
    for (int j = 0; j < n; ++j) {
      if (!in_passive[j] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    }
    if (best < 0) break;  // KKT satisfied
    in_passive[best] = true;
    passive.push_back(best);

    // Inner loop: restore feasibility of the passive-set least-squares
    // solution by moving toward it and dropping variables that hit zero.
    for (;;) {
      Eigen::VectorXd z = solve_passive(A, b, passive);

      double alpha = 1.0;
      bool all_positive = true;
      for (std::size_t k = 0; k < passive.size(); ++k) {
        if (z[static_cast<Eigen::Index>(k)] <= 0.0) {
          all_positive = false;
          const double xk = x[passive[k]];
          const double denom = xk - z[static_cast<Eigen::Index>(k)];
          if (denom > 0.0) alpha = std::min(alpha, xk / denom);
        }
      }
      if (all_positive) {
        for (std::size_t k = 0; k < passive.size(); ++k)
          x[passive[k]] = z[static_cast<Eigen::Index>(k)];
        break;
      }

      for (std::size_t k = 0; k < passive.size(); ++k) {
        const int j = passive[k];
        x[j] += alpha * (z[static_cast<Eigen::Index>(k)] - x[j]);
      }
      std::vector<int> kept;
      for (int j : passive) {
        if (x[j] <= std::numeric_limits<double>::epsilon() *
                        std::max(1.0, x.cwiseAbs().maxCoeff())) {
          x[j] = 0.0;
          in_passive[j] = false;
        } else {
          kept.push_back(j);
        }
      }
      passive = std::move(kept);
      if (passive.empty()) break;
    }

    w = A.transpose() * (b - A * x);
  }
  return x;
}

}  // namespace distpred
