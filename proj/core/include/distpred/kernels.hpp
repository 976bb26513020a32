#ifndef DISTPRED_KERNELS_HPP
#define DISTPRED_KERNELS_HPP

#include <Eigen/Dense>
#include <vector>

namespace distpred {

// Anisotropic squared-exponential correlation with nugget:
// exp[-sum_l (x_l - x'_l)^2 / nu_l] + g on the diagonal.
struct NumericKernelParams {
  Eigen::VectorXd lengthscale;  // nu, one positive entry per numeric input
  double nugget = 0.0;          // g >= 0
};

double gauss_corr(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
                  const NumericKernelParams& params, bool same_index);

// Block-diagonal within-category correlation. Rows must be grouped with
// nondecreasing category codes; entries across categories are exactly zero.
Eigen::MatrixXd build_residual_corr(const Eigen::MatrixXd& X,
                                    const std::vector<int>& z,
                                    const NumericKernelParams& params);

// Compact-support taper (1 - r/r_max)_+^v. r_max may be +infinity, in which
// case the taper is identically 1 (the no-threshold special case).
double wendland(double r, double r_max, double v);

// Positive-definiteness of the truncated-power taper on R^p requires
// v >= floor(p/2) + 1.
double wendland_min_exponent(int p);

// Unit-diagonal positive-definite category correlation from hypersphere
// angles theta_{ks} in (0, pi), k = 2..c, s = 1..k-1, via P = L L^T.
struct HypersphereCorr {
  Eigen::MatrixXd P;  // c x c correlation
  Eigen::MatrixXd L;  // lower triangular factor, positive diagonal
};

HypersphereCorr hypersphere_corr(const std::vector<double>& angles, int c);

// Derivatives dP/dtheta for every angle, ordered like the angle vector.
std::vector<Eigen::MatrixXd> hypersphere_corr_derivatives(
    const std::vector<double>& angles, int c);

struct CategoryCorrParams {
  std::vector<double> angles;  // c(c-1)/2 values in (0, pi)
  double support_radius = 0.0; // r_max > 0, may be +infinity
  double support_exponent = 0.0;  // v >= floor(p/2) + 1
};

// Cross-category effect correlation: entry (i, i') is
// P_{z_i z_{i'}} * (1 - r_{ii'}/r_max)_+^v with r the Euclidean distance.
Eigen::MatrixXd build_effect_corr(const Eigen::MatrixXd& X,
                                  const std::vector<int>& z,
                                  const CategoryCorrParams& params);

// The taper matrix Phi_{ii'} = (1 - r_{ii'}/r_max)_+^v on its own.
Eigen::MatrixXd build_taper(const Eigen::MatrixXd& X, double support_radius,
                            double support_exponent);

// Median pairwise Euclidean distance, the default support radius.
double median_pairwise_distance(const Eigen::MatrixXd& X);

void validate_category_sorted(const std::vector<int>& z);

}  // namespace distpred

#endif
