#ifndef DISTPRED_EVALUATE_HPP
#define DISTPRED_EVALUATE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "distpred/dataset.hpp"
#include "distpred/lmgp.hpp"

namespace distpred {

// L1 distance between two evaluated CDF polylines, by the trapezoid rule on
// the merged grid (>= min_grid points across the union of supports, plus
// exact splits at sign crossings of the difference).
double el1(const CdfCurve& F, const CdfCurve& F_hat, int min_grid = 1000);

// CDF polyline of a fitted quantile function over [Q(0), Q(1)] extended by
// `extend` of the range on each side.
CdfCurve make_cdf_curve(const QuantileFit& fit, const ISplineBasis& basis,
                        int points = 512, double extend = 0.01);

struct SummaryStats {
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> quantiles;
};

// Moments of the distribution via exact Gauss-Legendre integration of the
// quantile function per knot interval; quantiles by direct evaluation.
SummaryStats summary_stats(const QuantileFit& fit, const ISplineBasis& basis,
                           const std::vector<double>& probs);

struct FitOptions {
  Variant variant = Variant::lmgp;
  int order = 3;
  int knots = 20;
  std::optional<int> dprime;   // fixed component count; else threshold rule
  double svd_threshold = 0.8;
  bool truncate_intercept = false;
  EmConfig em;
};

// Full pipeline fit: smooth every configuration's quantile function,
// decompose the coefficient matrix, fit one model per retained component.
FittedModel fit_model(const Dataset& dataset, const FitOptions& options);

struct EvaluationConfig {
  std::vector<Variant> variants{Variant::lmgp};
  std::vector<double> train_props{0.3, 0.4, 0.5, 0.6, 0.7};
  int repeats = 100;
  std::uint64_t seed = 0;
  FitOptions fit;
  int el1_grid = 1000;
  int cdf_points = 256;
};

struct EvaluationCell {
  std::string variant;
  double train_prop = 0.0;
  int repeat = 0;
  double mean_el1 = 0.0;
  std::vector<double> per_config_el1;
};

struct EvaluationReport {
  std::uint64_t seed = 0;
  std::vector<EvaluationCell> cells;

  double aggregate(const std::string& variant, double train_prop) const;
  std::vector<double> cell_values(const std::string& variant,
                                  double train_prop) const;
  std::string to_csv() const;   // per-cell rows, deterministic
  std::string to_text() const;  // aggregated table, deterministic
};

// Repeated stratified train/test splits; the splits depend only on (seed,
// proportion, repeat), never on the variant list.
EvaluationReport evaluate(const Dataset& dataset,
                          const EvaluationConfig& config);

}  // namespace distpred

#endif
