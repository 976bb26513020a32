#ifndef DISTPRED_DIMRED_HPP
#define DISTPRED_DIMRED_HPP

#include <Eigen/Dense>

#include "distpred/curve.hpp"

namespace distpred {

// Thin SVD of the n x d spline coefficient matrix B = U diag(lambda) V^T,
// together with the decorrelated score matrix W = B V. lambda is padded with
// zeros to length d when n < d so downstream component selection always sees
// d values.
struct SvdFactors {
  Eigen::MatrixXd U;       // n x min(n, d)
  Eigen::VectorXd lambda;  // length d, nonincreasing, >= 0
  Eigen::MatrixXd V;       // d x d orthonormal
  Eigen::MatrixXd W;       // n x d scores, W = B V
};

SvdFactors decompose(const Eigen::MatrixXd& B);

// Smallest d' with sum_{j<=d'} lambda_j / sum_j lambda_j >= threshold.
int select_components(const Eigen::VectorXd& lambda, double threshold);

// Maps a predicted score vector back to spline coefficients:
// beta = V(:, 0..dprime-1) * w0, then negative basis coefficients are
// truncated to zero. The intercept is left untouched unless
// truncate_intercept is set (it is unconstrained in the fit).
QuantileFit reconstruct_beta(const Eigen::VectorXd& w0,
                             const Eigen::MatrixXd& V, int dprime,
                             bool truncate_intercept = false);

}  // namespace distpred

#endif
