#include "distpred/stats.hpp"

#include <cmath>
#include <limits>

#include "distpred/errors.hpp"

namespace distpred {

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-15;
  constexpr double kTiny = 1e-300;

  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw input_error("incomplete beta requires a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw input_error("degrees of freedom must be positive");
  const double p = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return t >= 0.0 ? 1.0 - p : p;
}

PairedTest paired_t_less(const std::vector<double>& a,
                         const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw input_error("paired test needs >= 2 pairs of equal length");
  PairedTest out;
  out.n = static_cast<int>(a.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] - b[i];
  out.mean_diff = sum / out.n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - out.mean_diff;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (out.n - 1));
  if (sd == 0.0) {
    out.t_stat = out.mean_diff < 0
                     ? -std::numeric_limits<double>::infinity()
                     : (out.mean_diff > 0
                            ? std::numeric_limits<double>::infinity()
                            : 0.0);
    out.p_value = out.mean_diff < 0 ? 0.0 : (out.mean_diff > 0 ? 1.0 : 0.5);
    return out;
  }
  out.t_stat = out.mean_diff / (sd / std::sqrt(static_cast<double>(out.n)));
  out.p_value = student_t_cdf(out.t_stat, out.n - 1);
  return out;
}

}  // namespace distpred
