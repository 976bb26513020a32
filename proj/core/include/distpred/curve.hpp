#ifndef DISTPRED_CURVE_HPP
#define DISTPRED_CURVE_HPP

#include <Eigen/Dense>
#include <vector>

namespace distpred {

// Sorted empirical quantile points {(b/m, y_(b))}, b = 1..m.
struct EmpiricalQuantilePoints {
  std::vector<double> prob;   // strictly increasing in (0, 1]
  std::vector<double> value;  // nondecreasing
};

EmpiricalQuantilePoints ecdf(const std::vector<double>& sample);

// Monotone spline basis: integrated M-splines on equally spaced interior
// knots over [0, 1]. Each basis function rises from 0 at p=0 to 1 at p=1 and
// is constant outside [0, 1], so any nonnegative combination is nondecreasing.
class ISplineBasis {
 public:
  // order >= 1 is the M-spline order (order 1 = piecewise-constant density,
  // i.e. piecewise-linear ramps); num_interior_knots >= 0.
  ISplineBasis(int order, int num_interior_knots);

  int order() const { return order_; }
  int size() const { return num_basis_; }  // d-1 basis functions
  const std::vector<double>& interior_knots() const { return interior_; }

  // All basis values at p, written to out[0..size()-1].
  void eval(double p, double* out) const;
  std::vector<double> eval(double p) const;

  // Underlying M-spline (density) values at p; used for cross-checks and
  // exact quadrature of spline integrals.
  std::vector<double> eval_density(double p) const;

  // Breakpoints {0, interior..., 1}; spline is polynomial between them.
  std::vector<double> breakpoints() const;

 private:
  int order_;
  int num_basis_;
  std::vector<double> interior_;
  std::vector<double> knots_;  // interior knots padded with order_+1 copies
                               // of 0 and 1 (for order-(k+1) B-splines)
};

// Spline representation of one quantile function: beta[0] is the free
// intercept, beta[1..d-1] are nonnegative basis coefficients.
struct QuantileFit {
  Eigen::VectorXd beta;
};

QuantileFit fit_quantile(const EmpiricalQuantilePoints& points,
                         const ISplineBasis& basis);

double eval_quantile(const QuantileFit& fit, const ISplineBasis& basis,
                     double p);

// Evaluated CDF polyline: F(y[i]) at sorted y.
struct CdfCurve {
  std::vector<double> y;
  std::vector<double> F;
};

// Inverts the fitted quantile function by monotone bisection on p in [0, 1]:
// F(y) = sup{p : Q(p) <= y}, clamped to 0 below Q(0) and 1 above Q(1).
CdfCurve quantile_to_cdf(const QuantileFit& fit, const ISplineBasis& basis,
                         const std::vector<double>& y_grid);

}  // namespace distpred

#endif
