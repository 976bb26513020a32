#include "distpred/curve.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "distpred/errors.hpp"
#include "distpred/nnls.hpp"

namespace distpred {

namespace {

// All |T|-m B-splines of order m at p, by the Cox-de Boor recursion over the
// full table. The rightmost non-degenerate interval is treated as closed so
// that evaluation at the right boundary returns the limit from the left.
void bspline_all(const std::vector<double>& T, int m, double p,
                 std::vector<double>& B) {
  const std::size_t nk = T.size();
  B.assign(nk - 1, 0.0);

  std::size_t span;
  if (p >= T.back()) {
    span = nk - 2;
    while (span > 0 && T[span] >= T[span + 1]) --span;
  } else {
    span = static_cast<std::size_t>(
               std::upper_bound(T.begin(), T.end(), p) - T.begin()) -
           1;
  }
  B[span] = 1.0;

  for (int ord = 2; ord <= m; ++ord) {
    const std::size_t count = nk - static_cast<std::size_t>(ord);
    for (std::size_t l = 0; l < count; ++l) {
      double left = 0.0, right = 0.0;
      if (B[l] > 0.0 && T[l + ord - 1] > T[l])
        left = (p - T[l]) / (T[l + ord - 1] - T[l]) * B[l];
      if (B[l + 1] > 0.0 && T[l + ord] > T[l + 1])
        right = (T[l + ord] - p) / (T[l + ord] - T[l + 1]) * B[l + 1];
      B[l] = left + right;
    }
  }
  B.resize(nk - static_cast<std::size_t>(m));
}

}  // namespace

EmpiricalQuantilePoints ecdf(const std::vector<double>& sample) {
  if (sample.empty()) throw input_error("empty replicate set");
  for (double v : sample)
    if (!std::isfinite(v))
      throw input_error("non-finite value in replicate set");

  std::vector<double> sorted = sample;
  std::sort(sorted.begin(), sorted.end());

  EmpiricalQuantilePoints out;
  const std::size_t m = sorted.size();
  out.prob.resize(m);
  out.value = std::move(sorted);
  for (std::size_t b = 0; b < m; ++b)
    out.prob[b] = static_cast<double>(b + 1) / static_cast<double>(m);
  return out;
}

ISplineBasis::ISplineBasis(int order, int num_interior_knots)
    : order_(order) {
  if (order < 1) throw input_error("spline order must be >= 1");
  if (num_interior_knots < 0)
    throw input_error("number of interior knots must be >= 0");

  interior_.resize(num_interior_knots);
  for (int i = 0; i < num_interior_knots; ++i)
    interior_[i] = static_cast<double>(i + 1) /
                   static_cast<double>(num_interior_knots + 1);

  num_basis_ = num_interior_knots + order;

  // Padding of order_+1 copies supports the order-(k+1) B-splines whose
  // suffix sums are the integrated basis.
  knots_.assign(order_ + 1, 0.0);
  knots_.insert(knots_.end(), interior_.begin(), interior_.end());
  knots_.insert(knots_.end(), order_ + 1, 1.0);
}

void ISplineBasis::eval(double p, double* out) const {
  if (p <= 0.0) {
    std::fill(out, out + num_basis_, 0.0);
    return;
  }
  if (p >= 1.0) {
    std::fill(out, out + num_basis_, 1.0);
    return;
  }
  thread_local std::vector<double> scratch;
  bspline_all(knots_, order_ + 1, p, scratch);
  // I_j(p) = sum_{l > j} B_{l, order+1}(p): suffix sums of the table.
  double acc = 0.0;
  for (int j = num_basis_ - 1; j >= 0; --j) {
    acc += scratch[static_cast<std::size_t>(j) + 1];
    out[j] = acc;
  }
}

std::vector<double> ISplineBasis::eval(double p) const {
  std::vector<double> out(num_basis_);
  eval(p, out.data());
  return out;
}

std::vector<double> ISplineBasis::eval_density(double p) const {
  std::vector<double> out(num_basis_, 0.0);
  if (p < 0.0 || p > 1.0) return out;
  // M-splines of order k live on the knot vector with padding k, i.e. the
  // padded vector above minus its first and last entry.
  thread_local std::vector<double> mknots, scratch;
  mknots.assign(knots_.begin() + 1, knots_.end() - 1);
  bspline_all(mknots, order_, p, scratch);
  for (int j = 0; j < num_basis_; ++j) {
    const double width = mknots[static_cast<std::size_t>(j) + order_] -
                         mknots[static_cast<std::size_t>(j)];
    if (width > 0.0) out[j] = static_cast<double>(order_) * scratch[j] / width;
  }
  return out;
}

std::vector<double> ISplineBasis::breakpoints() const {
  std::vector<double> bp;
  bp.reserve(interior_.size() + 2);
  bp.push_back(0.0);
  bp.insert(bp.end(), interior_.begin(), interior_.end());
  bp.push_back(1.0);
  return bp;
}

QuantileFit fit_quantile(const EmpiricalQuantilePoints& points,
                         const ISplineBasis& basis) {
  const std::size_t m = points.prob.size();
  if (m == 0) throw input_error("empty quantile point set");
  const int nb = basis.size();

  QuantileFit fit;
  fit.beta = Eigen::VectorXd::Zero(nb + 1);

  const bool degenerate =
      m < 2 || points.value.front() == points.value.back();
  if (degenerate) {
    fit.beta[0] = points.value.front();
    return fit;
  }

  Eigen::MatrixXd G(m, nb);
  std::vector<double> row(nb);
  Eigen::VectorXd y(m);
  for (std::size_t b = 0; b < m; ++b) {
    basis.eval(points.prob[b], row.data());
    for (int j = 0; j < nb; ++j) G(b, j) = row[j];
    y[b] = points.value[b];
  }

  // Free intercept handled by centering: solve the nonnegative problem on
  // mean-centered columns, then recover the intercept.
  const Eigen::RowVectorXd gbar = G.colwise().mean();
  const double ybar = y.mean();
  const Eigen::MatrixXd Gc = G.rowwise() - gbar;
  const Eigen::VectorXd yc = y.array() - ybar;

  const Eigen::VectorXd coef = nnls(Gc, yc);
  fit.beta[0] = ybar - gbar.dot(coef);
  fit.beta.tail(nb) = coef;
  return fit;
}

double eval_quantile(const QuantileFit& fit, const ISplineBasis& basis,
                     double p) {
  if (p < 0.0 || p > 1.0)
    throw input_error("quantile argument outside [0, 1]");
  thread_local std::vector<double> vals;
  vals.resize(basis.size());
  basis.eval(p, vals.data());
  double q = fit.beta[0];
  for (int j = 0; j < basis.size(); ++j) q += fit.beta[j + 1] * vals[j];
  return q;
}

CdfCurve quantile_to_cdf(const QuantileFit& fit, const ISplineBasis& basis,
                         const std::vector<double>& y_grid) {
  if (!std::is_sorted(y_grid.begin(), y_grid.end()))
    throw input_error("y grid must be sorted");

  const double q0 = eval_quantile(fit, basis, 0.0);
  const double q1 = eval_quantile(fit, basis, 1.0);

  CdfCurve out;
  out.y = y_grid;
  out.F.resize(y_grid.size());
  for (std::size_t i = 0; i < y_grid.size(); ++i) {
    const double y = y_grid[i];
    if (y < q0) {
      out.F[i] = 0.0;
    } else if (y >= q1) {
      out.F[i] = 1.0;
    } else {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (eval_quantile(fit, basis, mid) <= y)
          lo = mid;
        else
          hi = mid;
      }
      out.F[i] = lo;
    }
  }
  return out;
}

}  // namespace distpred
