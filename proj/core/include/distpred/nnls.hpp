#ifndef DISTPRED_NNLS_HPP
#define DISTPRED_NNLS_HPP

#include <Eigen/Dense>

namespace distpred {

// Lawson-Hanson active-set solver for min ||A x - b||^2 subject to x >= 0.
// Deterministic; terminates at the exact KKT point of the convex problem.
Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                     double tol = -1.0, int max_iter = -1);

}  // namespace distpred

#endif
