#include "distpred/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "distpred/errors.hpp"
#include "distpred/rng.hpp"

namespace distpred {

namespace {

double interp_cdf(const CdfCurve& c, double y) {
  if (c.y.empty()) throw input_error("empty CDF curve");
  if (y <= c.y.front()) return c.F.front();
  if (y >= c.y.back()) return c.F.back();
  const auto it = std::upper_bound(c.y.begin(), c.y.end(), y);
  const std::size_t hi = static_cast<std::size_t>(it - c.y.begin());
  const std::size_t lo = hi - 1;
  const double span = c.y[hi] - c.y[lo];
  if (span <= 0.0) return c.F[hi];
  const double t = (y - c.y[lo]) / span;
  return c.F[lo] + t * (c.F[hi] - c.F[lo]);
}

// 16-point Gauss-Legendre nodes/weights on [-1, 1], by Newton iteration on
// the Legendre polynomial.
struct GaussLegendre {
  std::vector<double> node, weight;
  explicit GaussLegendre(int n) {
    node.resize(n);
    weight.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double pp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        pp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / pp;
        x -= dx;
        if (std::fabs(dx) < 1e-15) break;
      }
      node[i] = -x;
      node[n - 1 - i] = x;
      weight[i] = weight[n - 1 - i] = 2.0 / ((1.0 - x * x) * pp * pp);
    }
  }
};

}  // namespace

double el1(const CdfCurve& F, const CdfCurve& F_hat, int min_grid) {
  if (F.y.empty() || F_hat.y.empty()) throw input_error("empty CDF curve");
  min_grid = std::max(min_grid, 1000);

  double lo = std::min(F.y.front(), F_hat.y.front());
  double hi = std::max(F.y.back(), F_hat.y.back());
  if (!(hi > lo)) return 0.0;
  const double pad = 0.01 * (hi - lo);
  lo -= pad;
  hi += pad;

  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(min_grid) + F.y.size() +
               F_hat.y.size());
  for (int i = 0; i < min_grid; ++i)
    grid.push_back(lo + (hi - lo) * i / (min_grid - 1.0));
  for (double y : F.y) grid.push_back(y);
  for (double y : F_hat.y) grid.push_back(y);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  double total = 0.0;
  double prev_y = grid.front();
  double prev_d = interp_cdf(F, prev_y) - interp_cdf(F_hat, prev_y);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double y = grid[i];
    const double d = interp_cdf(F, y) - interp_cdf(F_hat, y);
    const double h = y - prev_y;
    if (prev_d * d < 0.0) {
      // Piecewise-linear difference changes sign inside the interval: split
      // at the crossing to keep the trapezoid rule exact.
      const double t = prev_d / (prev_d - d);
      total += 0.5 * std::fabs(prev_d) * h * t;
      total += 0.5 * std::fabs(d) * h * (1.0 - t);
    } else {
      total += 0.5 * (std::fabs(prev_d) + std::fabs(d)) * h;
    }
    prev_y = y;
    prev_d = d;
  }
  return total;
}

CdfCurve make_cdf_curve(const QuantileFit& fit, const ISplineBasis& basis,
                        int points, double extend) {
  const double q0 = eval_quantile(fit, basis, 0.0);
  const double q1 = eval_quantile(fit, basis, 1.0);
  const double range = std::max(q1 - q0, 1e-12);
  const double lo = q0 - extend * range;
  const double hi = q1 + extend * range;
  std::vector<double> y(points);
  for (int i = 0; i < points; ++i)
    y[i] = lo + (hi - lo) * i / (points - 1.0);
  return quantile_to_cdf(fit, basis, y);
}

SummaryStats summary_stats(const QuantileFit& fit, const ISplineBasis& basis,
                           const std::vector<double>& probs) {
  static const GaussLegendre gl(16);
  const std::vector<double> bp = basis.breakpoints();

  double mean = 0.0, second = 0.0;
  for (std::size_t seg = 0; seg + 1 < bp.size(); ++seg) {
    const double a = bp[seg], b = bp[seg + 1];
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t i = 0; i < gl.node.size(); ++i) {
      const double q = eval_quantile(fit, basis, mid + half * gl.node[i]);
      mean += half * gl.weight[i] * q;
      second += half * gl.weight[i] * q * q;
    }
  }
  SummaryStats out;
  out.mean = mean;
  out.sd = std::sqrt(std::max(second - mean * mean, 0.0));
  out.quantiles.reserve(probs.size());
  for (double p : probs)
    out.quantiles.push_back(eval_quantile(fit, basis, p));
  return out;
}

FittedModel fit_model(const Dataset& dataset, const FitOptions& options) {
  if (dataset.n() < 2) throw input_error("need at least 2 configurations");

  FittedModel model;
  model.basis = ISplineBasis(options.order, options.knots);
  model.truncate_intercept = options.truncate_intercept;
  model.X = dataset.X;
  model.z = dataset.z;

  const int d = model.basis.size() + 1;
  Eigen::MatrixXd B(dataset.n(), d);
  for (int i = 0; i < dataset.n(); ++i)
    B.row(i) =
        fit_quantile(ecdf(dataset.samples[i]), model.basis).beta.transpose();

  const SvdFactors svd = decompose(B);
  model.V = svd.V;
  model.lambda = svd.lambda;
  if (options.dprime) {
    model.dprime = std::min(std::max(*options.dprime, 1), d);
  } else {
    model.dprime = select_components(svd.lambda, options.svd_threshold);
  }
  model.W = svd.W.leftCols(model.dprime);

  for (int j = 0; j < model.dprime; ++j) {
    ComponentData data =
        ComponentData::make(model.W.col(j), model.X, model.z);
    FitResult res = fit_em(data, options.variant, options.em);
    model.components.push_back(std::move(res.params));
    model.component_converged.push_back(res.converged ? 1 : 0);
  }
  return model;
}

double EvaluationReport::aggregate(const std::string& variant,
                                   double train_prop) const {
  double sum = 0.0;
  int count = 0;
  for (const auto& cell : cells) {
    if (cell.variant == variant &&
        std::fabs(cell.train_prop - train_prop) < 1e-12) {
      sum += cell.mean_el1;
      ++count;
    }
  }
  if (count == 0) throw input_error("no cells for requested aggregate");
  return sum / count;
}

std::vector<double> EvaluationReport::cell_values(const std::string& variant,
                                                  double train_prop) const {
  std::vector<double> vals;
  for (const auto& cell : cells)
    if (cell.variant == variant &&
        std::fabs(cell.train_prop - train_prop) < 1e-12)
      vals.push_back(cell.mean_el1);
  return vals;
}

std::string EvaluationReport::to_csv() const {
  std::string out = "variant,train_prop,repeat,mean_el1\n";
  char buf[128];
  for (const auto& cell : cells) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%d,%.17g\n",
                  cell.variant.c_str(), cell.train_prop, cell.repeat,
                  cell.mean_el1);
    out += buf;
  }
  return out;
}

std::string EvaluationReport::to_text() const {
  std::set<std::string> variants;
  std::set<double> props;
  for (const auto& cell : cells) {
    variants.insert(cell.variant);
    props.insert(cell.train_prop);
  }
  std::ostringstream os;
  os << "Average EL1 over repeated stratified train/test splits (seed "
     << seed << ")\n\n";
  os << "train_prop";
  for (const auto& v : variants) os << '\t' << v;
  os << '\n';
  char buf[64];
  for (double prop : props) {
    std::snprintf(buf, sizeof(buf), "%.2f", prop);
    os << buf;
    for (const auto& v : variants) {
      std::snprintf(buf, sizeof(buf), "\t%.6f", aggregate(v, prop));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

namespace {

struct Split {
  std::vector<int> train;  // config indices, sorted
  std::vector<int> test;
};

Split stratified_split(const Dataset& dataset, double prop, Rng& rng) {
  const std::vector<int> sizes = dataset.category_sizes();
  Split split;
  for (int attempt = 0; attempt < 100; ++attempt) {
    split.train.clear();
    split.test.clear();
    int offset = 0;
    bool ok = true;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const int nk = sizes[k];
      std::vector<int> idx(nk);
      for (int i = 0; i < nk; ++i) idx[i] = offset + i;
      for (int i = nk - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.uniform_int(0, i)]);
      int take = static_cast<int>(std::lround(prop * nk));
      take = std::min(std::max(take, 2), nk - 1);
      if (nk < 3) {
        ok = false;
        break;
      }
      split.train.insert(split.train.end(), idx.begin(), idx.begin() + take);
      split.test.insert(split.test.end(), idx.begin() + take, idx.end());
      offset += nk;
    }
    if (ok) {
      std::sort(split.train.begin(), split.train.end());
      std::sort(split.test.begin(), split.test.end());
      return split;
    }
  }
  throw input_error(
      "cannot build a stratified split with >= 2 training and >= 1 test "
      "configuration per category");
}

Dataset subset(const Dataset& dataset, const std::vector<int>& rows) {
  Dataset out;
  out.schema = dataset.schema;
  out.category_names = dataset.category_names;
  out.preprocessed = dataset.preprocessed;
  out.X_raw.resize(rows.size(), dataset.X_raw.cols());
  out.X.resize(rows.size(), dataset.X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X_raw.row(i) = dataset.X_raw.row(rows[i]);
    out.X.row(i) = dataset.X.row(rows[i]);
    out.z.push_back(dataset.z[rows[i]]);
    out.samples.push_back(dataset.samples[rows[i]]);
  }
  return out;
}

}  // namespace

EvaluationReport evaluate(const Dataset& dataset,
                          const EvaluationConfig& config) {
  if (dataset.n() < 3) throw input_error("dataset too small to evaluate");
  if (config.repeats < 1) throw input_error("repeats must be >= 1");
  for (double prop : config.train_props)
    if (!(prop > 0.0 && prop < 1.0))
      throw input_error("train proportions must lie in (0, 1)");

  const ISplineBasis basis(config.fit.order, config.fit.knots);

  // Reference curves: the smoothed quantile fit of every configuration's own
  // replicates, shared across repeats and variants.
  std::vector<CdfCurve> reference(dataset.n());
  for (int i = 0; i < dataset.n(); ++i)
    reference[i] = make_cdf_curve(fit_quantile(ecdf(dataset.samples[i]), basis),
                                  basis, config.cdf_points);

  const Rng master(config.seed);
  EvaluationReport report;
  report.seed = config.seed;

  for (std::size_t ip = 0; ip < config.train_props.size(); ++ip) {
    const double prop = config.train_props[ip];
    for (int rep = 0; rep < config.repeats; ++rep) {
      // Split depends on (seed, proportion, repeat) only.
      Rng cell_rng = master.derive(ip * 1000003ULL +
                                   static_cast<std::uint64_t>(rep));
      const Split split = stratified_split(dataset, prop, cell_rng);
      const Dataset train = subset(dataset, split.train);

      for (Variant variant : config.variants) {
        FitOptions fit_opts = config.fit;
        fit_opts.variant = variant;
        const FittedModel model = fit_model(train, fit_opts);
        const ModelPredictor predictor(model);

        EvaluationCell cell;
        cell.variant = variant_name(variant);
        cell.train_prop = prop;
        cell.repeat = rep;
        double sum = 0.0;
        for (int idx : split.test) {
          const QuantileFit pred =
              predictor.predict_fit(dataset.X.row(idx).transpose(),
                                    dataset.z[idx]);
          const CdfCurve pred_curve =
              make_cdf_curve(pred, basis, config.cdf_points);
          const double err =
              el1(reference[idx], pred_curve, config.el1_grid);
          cell.per_config_el1.push_back(err);
          sum += err;
        }
        cell.mean_el1 = sum / static_cast<double>(split.test.size());
        report.cells.push_back(std::move(cell));
      }
    }
  }
  return report;
}

}  // namespace distpred
