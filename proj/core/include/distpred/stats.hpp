#ifndef DISTPRED_STATS_HPP
#define DISTPRED_STATS_HPP

#include <vector>

namespace distpred {

// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

double normal_cdf(double x);

double student_t_cdf(double t, double df);

// One-sided paired comparison: p-value for H1 "mean(a - b) < 0".
struct PairedTest {
  double mean_diff = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  int n = 0;
};

PairedTest paired_t_less(const std::vector<double>& a,
                         const std::vector<double>& b);

}  // namespace distpred

#endif
