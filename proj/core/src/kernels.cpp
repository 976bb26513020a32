#include "distpred/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "distpred/errors.hpp"

namespace distpred {

void validate_category_sorted(const std::vector<int>& z) {
  for (std::size_t i = 1; i < z.size(); ++i)
    if (z[i] < z[i - 1]) throw input_error("data must be category-sorted");
}

double gauss_corr(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
                  const NumericKernelParams& params, bool same_index) {
  if (x1.size() != x2.size() || x1.size() != params.lengthscale.size())
    throw input_error("kernel input dimension mismatch");
  double dist = 0.0;
  for (Eigen::Index l = 0; l < x1.size(); ++l) {
    const double d = x1[l] - x2[l];
    dist += d * d / params.lengthscale[l];
  }
  return std::exp(-dist) + (same_index ? params.nugget : 0.0);
}

Eigen::MatrixXd build_residual_corr(const Eigen::MatrixXd& X,
                                    const std::vector<int>& z,
                                    const NumericKernelParams& params) {
  const Eigen::Index n = X.rows();
  if (static_cast<Eigen::Index>(z.size()) != n)
    throw input_error("label count does not match row count");
  if (params.lengthscale.size() != X.cols())
    throw input_error("lengthscale dimension mismatch");
  if ((params.lengthscale.array() <= 0.0).any())
    throw input_error("lengthscales must be positive");
  if (params.nugget < 0.0) throw input_error("nugget must be >= 0");
  validate_category_sorted(z);

  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    omega(i, i) = 1.0 + params.nugget;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (z[j] != z[i]) break;  // sorted labels: rest of row is other blocks
      double dist = 0.0;
      for (Eigen::Index l = 0; l < X.cols(); ++l) {
        const double d = X(i, l) - X(j, l);
        dist += d * d / params.lengthscale[l];
      }
      omega(i, j) = omega(j, i) = std::exp(-dist);
    }
  }
  return omega;
}

double wendland(double r, double r_max, double v) {
  if (!(r_max > 0.0)) throw input_error("support radius must be positive");
  if (r < 0.0) throw input_error("distance must be >= 0");
  if (std::isinf(r_max)) return 1.0;
  const double t = 1.0 - r / r_max;
  return t > 0.0 ? std::pow(t, v) : 0.0;
}

double wendland_min_exponent(int p) { return p / 2 + 1; }

HypersphereCorr hypersphere_corr(const std::vector<double>& angles, int c) {
  if (c < 1) throw input_error("category count must be >= 1");
  const std::size_t expected =
      static_cast<std::size_t>(c) * static_cast<std::size_t>(c - 1) / 2;
  if (angles.size() != expected)
    throw input_error("angle count must be c(c-1)/2");
  for (double a : angles)
    if (!(a > 0.0 && a < M_PI))
      throw input_error("hypersphere angles must lie in (0, pi)");

  HypersphereCorr out;
  out.L = Eigen::MatrixXd::Zero(c, c);
  out.L(0, 0) = 1.0;
  std::size_t idx = 0;
  for (int k = 1; k < c; ++k) {
    double sin_prod = 1.0;
    for (int s = 0; s < k; ++s) {
      out.L(k, s) = sin_prod * std::cos(angles[idx + s]);
      sin_prod *= std::sin(angles[idx + s]);
    }
    out.L(k, k) = sin_prod;
    idx += static_cast<std::size_t>(k);
  }
  out.P = out.L * out.L.transpose();
  return out;
}

std::vector<Eigen::MatrixXd> hypersphere_corr_derivatives(
    const std::vector<double>& angles, int c) {
  const HypersphereCorr hc = hypersphere_corr(angles, c);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(angles.size());

  std::size_t row_start = 0;
  for (int k = 1; k < c; ++k) {
    for (int s = 0; s < k; ++s) {
      // d/dtheta_{ks} touches only row k of L: entries s..k.
      Eigen::MatrixXd dL = Eigen::MatrixXd::Zero(c, c);
      double sin_prod = 1.0;
      for (int m = 0; m < s; ++m) sin_prod *= std::sin(angles[row_start + m]);
      dL(k, s) = -sin_prod * std::sin(angles[row_start + s]);
      double tail_prod = sin_prod * std::cos(angles[row_start + s]);
      for (int m = s + 1; m < k; ++m) {
        dL(k, m) = tail_prod * std::cos(angles[row_start + m]);
        tail_prod *= std::sin(angles[row_start + m]);
      }
      dL(k, k) = tail_prod;

      Eigen::MatrixXd dP = dL * hc.L.transpose();
      dP += dP.transpose().eval();
      out.push_back(std::move(dP));
    }
    row_start += static_cast<std::size_t>(k);
  }
  return out;
}

Eigen::MatrixXd build_taper(const Eigen::MatrixXd& X, double support_radius,
                            double support_exponent) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = (X.row(i) - X.row(j)).norm();
      phi(i, j) = phi(j, i) = wendland(r, support_radius, support_exponent);
    }
  return phi;
}

Eigen::MatrixXd build_effect_corr(const Eigen::MatrixXd& X,
                                  const std::vector<int>& z,
                                  const CategoryCorrParams& params) {
  const Eigen::Index n = X.rows();
  if (static_cast<Eigen::Index>(z.size()) != n)
    throw input_error("label count does not match row count");
  validate_category_sorted(z);
  const int c = z.empty() ? 0 : *std::max_element(z.begin(), z.end()) + 1;
  const double min_v = wendland_min_exponent(static_cast<int>(X.cols()));
  if (params.support_exponent < min_v)
    throw input_error("support exponent too small for positive definiteness");

  const HypersphereCorr hc = hypersphere_corr(params.angles, c);
  Eigen::MatrixXd omega = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = (X.row(i) - X.row(j)).norm();
      const double taper =
          wendland(r, params.support_radius, params.support_exponent);
      omega(i, j) = omega(j, i) = hc.P(z[i], z[j]) * taper;
    }
  return omega;
}

double median_pairwise_distance(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      dists.push_back((X.row(i) - X.row(j)).norm());
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  return dists[dists.size() / 2];
}

}  // namespace distpred
