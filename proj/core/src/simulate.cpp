#include "distpred/simulate.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "distpred/errors.hpp"
#include "distpred/rng.hpp"
#include "distpred/stats.hpp"

namespace distpred {

namespace {

Eigen::VectorXd vector_from_json(const nlohmann::json& j, int p) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
  if (j.is_null()) return v;
  if (!j.is_array()) throw input_error("expected an array of numbers");
  for (int l = 0; l < std::min<int>(p, static_cast<int>(j.size())); ++l)
    v[l] = j[l].get<double>();
  return v;
}

}  // namespace

SimSpec SimSpec::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw input_error(std::string("invalid generator spec: ") + e.what());
  }
  SimSpec spec;
  spec.num_numeric = j.value("num_numeric", spec.num_numeric);
  spec.categories = j.value("categories", spec.categories);
  spec.replicates = j.value("replicates", spec.replicates);
  spec.configs_per_category =
      j.value("configs_per_category", spec.configs_per_category);
  spec.design = j.value("design", spec.design);
  spec.shift_scale = j.value("shift_scale", spec.shift_scale);
  spec.shift_corr = j.value("shift_corr", spec.shift_corr);
  spec.shift_terms = j.value("shift_terms", spec.shift_terms);
  if (j.contains("components")) {
    for (const auto& cj : j.at("components")) {
      MixtureComponentSpec c;
      c.weight0 = cj.value("weight0", 0.0);
      c.weight_slope = vector_from_json(cj.contains("weight_slope")
                                            ? cj.at("weight_slope")
                                            : nlohmann::json(),
                                        spec.num_numeric);
      c.mean0 = cj.value("mean0", 0.0);
      c.mean_slope = vector_from_json(
          cj.contains("mean_slope") ? cj.at("mean_slope") : nlohmann::json(),
          spec.num_numeric);
      c.mean_quad = cj.value("mean_quad", 0.0);
      c.sd = cj.value("sd", 0.1);
      spec.components.push_back(std::move(c));
    }
  }
  if (spec.components.empty()) spec.components = example().components;
  spec.validate();
  return spec;
}

std::string SimSpec::to_json() const {
  nlohmann::json j;
  j["num_numeric"] = num_numeric;
  j["categories"] = categories;
  j["replicates"] = replicates;
  j["configs_per_category"] = configs_per_category;
  j["design"] = design;
  j["shift_scale"] = shift_scale;
  j["shift_corr"] = shift_corr;
  j["shift_terms"] = shift_terms;
  j["components"] = nlohmann::json::array();
  for (const auto& c : components) {
    nlohmann::json cj;
    cj["weight0"] = c.weight0;
    cj["weight_slope"] =
        std::vector<double>(c.weight_slope.begin(), c.weight_slope.end());
    cj["mean0"] = c.mean0;
    cj["mean_slope"] =
        std::vector<double>(c.mean_slope.begin(), c.mean_slope.end());
    cj["mean_quad"] = c.mean_quad;
    cj["sd"] = c.sd;
    j["components"].push_back(cj);
  }
  return j.dump(2);
}

void SimSpec::validate() const {
  if (num_numeric < 1) throw input_error("num_numeric must be >= 1");
  if (categories < 1) throw input_error("categories must be >= 1");
  if (replicates < 1) throw input_error("replicates must be >= 1");
  if (configs_per_category < 1)
    throw input_error("configs_per_category must be >= 1");
  if (design != "grid" && design != "random")
    throw input_error("design must be 'grid' or 'random'");
  if (components.empty()) throw input_error("need at least one component");
  for (const auto& c : components) {
    if (!(c.sd >= 0.0)) throw input_error("component sd must be >= 0");
    if (c.weight_slope.size() != num_numeric ||
        c.mean_slope.size() != num_numeric)
      throw input_error("component slopes must have num_numeric entries");
  }
  if (shift_corr < -1.0 / std::max(1, categories - 1) || shift_corr > 1.0)
    throw input_error("shift_corr outside the valid correlation range");
  if (shift_terms < 0) throw input_error("shift_terms must be >= 0");
}

SimSpec SimSpec::example() {
  SimSpec spec;
  MixtureComponentSpec lo;
  lo.weight0 = 0.3;
  lo.weight_slope = Eigen::VectorXd::Zero(spec.num_numeric);
  lo.weight_slope[0] = 1.2;
  lo.mean0 = 0.5;
  lo.mean_slope = Eigen::VectorXd::Constant(spec.num_numeric, 0.8);
  lo.mean_quad = 0.4;
  lo.sd = 0.12;

  MixtureComponentSpec hi;
  hi.weight0 = -0.3;
  hi.weight_slope = Eigen::VectorXd::Zero(spec.num_numeric);
  hi.weight_slope[spec.num_numeric - 1] = -0.9;
  hi.mean0 = 2.0;
  hi.mean_slope = Eigen::VectorXd::Constant(spec.num_numeric, 1.1);
  hi.mean_quad = -0.3;
  hi.sd = 0.18;

  spec.components = {lo, hi};
  return spec;
}

double SimOracle::shift_at(const Eigen::VectorXd& x, int category) const {
  double s = 0.0;
  for (const auto& term : shift_)
    s += term.coef[category] *
         std::cos(M_PI * term.direction.dot(x) + term.phase);
  return spec_.shift_scale * s;
}

void SimOracle::mixture_at(const Eigen::VectorXd& x, int category,
                           std::vector<double>& weights,
                           std::vector<double>& means,
                           std::vector<double>& sds) const {
  const std::size_t K = spec_.components.size();
  weights.resize(K);
  means.resize(K);
  sds.resize(K);
  const double shift = shift_at(x, category);
  double wmax = -1e300;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = spec_.components[k];
    weights[k] = c.weight0 + c.weight_slope.dot(x);
    wmax = std::max(wmax, weights[k]);
    means[k] = c.mean0 + c.mean_slope.dot(x) + c.mean_quad * x.squaredNorm() +
               shift;
    sds[k] = c.sd;
  }
  double wsum = 0.0;
  for (double& w : weights) {
    w = std::exp(w - wmax);
    wsum += w;
  }
  for (double& w : weights) w /= wsum;
}

double SimOracle::true_cdf(const Eigen::VectorXd& x, int category,
                           double y) const {
  std::vector<double> w, m, s;
  mixture_at(x, category, w, m, s);
  double F = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (s[k] > 0.0)
      F += w[k] * normal_cdf((y - m[k]) / s[k]);
    else
      F += y >= m[k] ? w[k] : 0.0;
  }
  return F;
}

double SimOracle::true_quantile(const Eigen::VectorXd& x, int category,
                                double p) const {
  if (p < 0.0 || p > 1.0) throw input_error("probability outside [0, 1]");
  std::vector<double> w, m, s;
  mixture_at(x, category, w, m, s);
  double lo = m[0], hi = m[0], smax = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    lo = std::min(lo, m[k]);
    hi = std::max(hi, m[k]);
    smax = std::max(smax, s[k]);
  }
  lo -= 10.0 * smax + 1e-12;
  hi += 10.0 * smax + 1e-12;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + std::fabs(hi));
       ++it) {
    const double mid = 0.5 * (lo + hi);
    if (true_cdf(x, category, mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

Simulation simulate(const SimSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const int p = spec.num_numeric;
  const int c = spec.categories;

  Simulation sim;
  sim.oracle.spec_ = spec;

  // Smooth cross-correlated shift field: coefficient vectors across
  // categories share an equicorrelation structure.
  Eigen::MatrixXd R =
      Eigen::MatrixXd::Constant(c, c, spec.shift_corr);
  R.diagonal().setOnes();
  const Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() != Eigen::Success)
    throw input_error("shift_corr does not give a valid correlation matrix");
  const Eigen::MatrixXd Lr = llt.matrixL();
  for (int t = 0; t < spec.shift_terms; ++t) {
    SimOracle::ShiftTerm term;
    term.direction.resize(p);
    for (int l = 0; l < p; ++l) term.direction[l] = rng.uniform(0.5, 2.5);
    term.phase = rng.uniform(0.0, 2.0 * M_PI);
    Eigen::VectorXd gauss(c);
    for (int k = 0; k < c; ++k) gauss[k] = rng.normal();
    term.coef = Lr * gauss / std::sqrt(static_cast<double>(
                                 std::max(1, spec.shift_terms)));
    sim.oracle.shift_.push_back(std::move(term));
  }

  // Configuration grid, shared by every category.
  Eigen::MatrixXd grid(spec.configs_per_category, p);
  if (spec.design == "grid") {
    int side = 1;
    while (std::pow(side, p) < spec.configs_per_category) ++side;
    int filled = 0;
    std::vector<int> index(p, 0);
    while (filled < spec.configs_per_category) {
      for (int l = 0; l < p; ++l)
        grid(filled, l) =
            side == 1 ? 0.5
                      : static_cast<double>(index[l]) /
                            static_cast<double>(side - 1);
      ++filled;
      for (int l = p - 1; l >= 0; --l) {
        if (++index[l] < side) break;
        index[l] = 0;
      }
    }
  } else {
    for (int i = 0; i < spec.configs_per_category; ++i)
      for (int l = 0; l < p; ++l) grid(i, l) = rng.uniform();
  }

  Dataset& ds = sim.dataset;
  const int n = spec.configs_per_category * c;
  ds.X_raw.resize(n, p);
  ds.z.reserve(n);
  ds.samples.reserve(n);
  for (int k = 0; k < c; ++k)
    ds.category_names.push_back("cat" + std::to_string(k));

  std::vector<double> w, m, s;
  for (int k = 0; k < c; ++k) {
    for (int i = 0; i < spec.configs_per_category; ++i) {
      const int row = k * spec.configs_per_category + i;
      ds.X_raw.row(row) = grid.row(i);
      ds.z.push_back(k);
      sim.oracle.mixture_at(grid.row(i).transpose(), k, w, m, s);
      std::vector<double> values(spec.replicates);
      for (int b = 0; b < spec.replicates; ++b) {
        const double u = rng.uniform();
        std::size_t comp = 0;
        double acc = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
          acc += w[j];
          if (u < acc || j + 1 == w.size()) {
            comp = j;
            break;
          }
        }
        values[b] = m[comp] + s[comp] * rng.normal();
      }
      ds.samples.push_back(std::move(values));
    }
  }
  ds.X = ds.X_raw;
  ds.preprocessed = true;

  DatasetSchema schema;
  for (int l = 0; l < p; ++l)
    schema.numeric_cols.push_back("x" + std::to_string(l + 1));
  schema.categorical_cols = {"category"};
  schema.outcome_col = "value";
  ds.schema = std::move(schema);
  return sim;
}

}  // namespace distpred
