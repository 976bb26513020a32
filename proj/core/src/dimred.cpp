#include "distpred/dimred.hpp"

#include <Eigen/SVD>

#include "distpred/errors.hpp"

namespace distpred {

SvdFactors decompose(const Eigen::MatrixXd& B) {
  if (B.rows() < 1 || B.cols() < 1)
    throw input_error("coefficient matrix is empty");
  if (!B.allFinite())
    throw input_error("coefficient matrix has non-finite entries");

  const Eigen::Index d = B.cols();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      B, Eigen::ComputeThinU | Eigen::ComputeFullV);

  SvdFactors out;
  out.U = svd.matrixU();
  out.V = svd.matrixV();
  out.lambda = Eigen::VectorXd::Zero(d);
  out.lambda.head(svd.singularValues().size()) = svd.singularValues();
  out.W = B * out.V;
  return out;
}

int select_components(const Eigen::VectorXd& lambda, double threshold) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw input_error("singular-value threshold must lie in (0, 1]");
  const double total = lambda.sum();
  if (!(total > 0.0))
    throw input_error("all singular values are zero");
  for (Eigen::Index j = 0; j + 1 < lambda.size(); ++j)
    if (lambda[j] < lambda[j + 1] || lambda[j] < 0.0)
      throw input_error("singular values must be nonincreasing and >= 0");

  double acc = 0.0;
  for (Eigen::Index j = 0; j < lambda.size(); ++j) {
    acc += lambda[j];
    if (acc / total >= threshold) return static_cast<int>(j) + 1;
  }
  return static_cast<int>(lambda.size());
}

QuantileFit reconstruct_beta(const Eigen::VectorXd& w0,
                             const Eigen::MatrixXd& V, int dprime,
                             bool truncate_intercept) {
  if (dprime < 1 || dprime > V.cols())
    throw input_error("component count out of range");
  if (w0.size() != dprime)
    throw input_error("score vector length does not match component count");

  QuantileFit fit;
  fit.beta = V.leftCols(dprime) * w0;
  const Eigen::Index start = truncate_intercept ? 0 : 1;
  for (Eigen::Index j = start; j < fit.beta.size(); ++j)
    if (fit.beta[j] < 0.0) fit.beta[j] = 0.0;
  return fit;
}

}  // namespace distpred
