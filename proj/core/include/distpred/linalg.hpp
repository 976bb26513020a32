#ifndef DISTPRED_LINALG_HPP
#define DISTPRED_LINALG_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

#include "distpred/errors.hpp"

namespace distpred {

// Cholesky factor of a symmetric positive (semi)definite matrix with jitter
// escalation: on failure retries with A + jitter*I for jitter in
// {1e-10, 1e-9, ..., 1e-6}, then throws. The jitter actually applied is
// recorded so callers can report it instead of absorbing it silently.
struct SpdFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;

  double log_det() const {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }

  template <typename Derived>
  auto solve(const Eigen::MatrixBase<Derived>& b) const {
    return llt.solve(b.derived()).eval();
  }
};

inline SpdFactor spd_factor(const Eigen::MatrixXd& a,
                            double max_jitter = 1e-6) {
  SpdFactor out;
  out.llt.compute(a);
  if (out.llt.info() == Eigen::Success) return out;
  for (double jitter = 1e-10; jitter <= max_jitter * 1.0000001;
       jitter *= 10.0) {
    Eigen::MatrixXd aj = a;
    aj.diagonal().array() += jitter;
    out.llt.compute(aj);
    if (out.llt.info() == Eigen::Success) {
      out.jitter = jitter;
      return out;
    }
  }
  throw numeric_error("covariance singular; increase nugget");
}

inline bool all_finite(const Eigen::MatrixXd& a) {
  return a.allFinite();
}

}  // namespace distpred

#endif
