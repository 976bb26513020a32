#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "distpred/dataset.hpp"
#include "distpred/errors.hpp"
#include "distpred/evaluate.hpp"
#include "distpred/model_io.hpp"
#include "distpred/simulate.hpp"

namespace {

using namespace distpred;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<double> split_doubles(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split_list(text)) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw input_error("cannot parse number '" + tok + "'");
    }
  }
  return out;
}

std::vector<std::string> csv_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw input_error("empty file '" + path + "'");
  std::vector<std::string> cols;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cols.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cols.push_back(cur);
  return cols;
}

struct SchemaFlags {
  std::string numeric, categorical, outcome, log2;
  double outcome_scale = 1.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--numeric", numeric,
                    "numeric factor columns (comma list; default: all "
                    "columns except categorical and outcome)");
    cmd->add_option("--categorical", categorical,
                    "categorical factor columns (default: 'category' or "
                    "'mode' when present)");
    cmd->add_option("--outcome", outcome,
                    "outcome column (default: last column)");
    cmd->add_option("--log2", log2,
                    "numeric columns to model on the log2 scale");
    cmd->add_option("--outcome-scale", outcome_scale,
                    "divide the outcome by this scale on load");
  }

  DatasetSchema resolve(const std::string& data_path) const {
    const std::vector<std::string> header = csv_header(data_path);
    DatasetSchema schema;
    schema.outcome_scale = outcome_scale;
    schema.outcome_col = outcome.empty() ? header.back() : outcome;
    if (!categorical.empty()) {
      schema.categorical_cols = split_list(categorical);
    } else {
      for (const auto& name : header)
        if (name == "category" || name == "mode")
          schema.categorical_cols.push_back(name);
    }
    if (!numeric.empty()) {
      schema.numeric_cols = split_list(numeric);
    } else {
      for (const auto& name : header) {
        if (name == schema.outcome_col) continue;
        bool is_cat = false;
        for (const auto& c : schema.categorical_cols)
          if (c == name) is_cat = true;
        if (!is_cat) schema.numeric_cols.push_back(name);
      }
    }
    schema.log2_cols = split_list(log2);
    return schema;
  }
};

struct EmFlags {
  int max_iter = 60;
  double tol = 1e-6;
  int starts = 1;
  int inner_steps = 25;
  double fixed_nugget = -1.0;  // <0: fit the nugget
  double support_radius = -1.0;
  double support_exponent = -1.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--em-max-iter", max_iter, "EM iteration cap");
    cmd->add_option("--em-tol", tol, "relative log-likelihood tolerance");
    cmd->add_option("--starts", starts, "number of optimizer starts");
    cmd->add_option("--inner-steps", inner_steps,
                    "optimizer iterations per M-step");
    cmd->add_option("--fixed-nugget", fixed_nugget,
                    "pin the nugget instead of fitting it");
    cmd->add_option("--support-radius", support_radius,
                    "taper range (default: median pairwise distance)");
    cmd->add_option("--support-exponent", support_exponent,
                    "taper exponent (default: floor(p/2)+1)");
  }

  EmConfig resolve() const {
    EmConfig em;
    em.max_iter = max_iter;
    em.tol = tol;
    em.starts = starts;
    em.inner_max_iter = inner_steps;
    if (fixed_nugget >= 0.0) em.fixed_nugget = fixed_nugget;
    if (support_radius > 0.0) em.support_radius = support_radius;
    if (support_exponent > 0.0) em.support_exponent = support_exponent;
    return em;
  }
};

struct ConfigQuery {
  Eigen::VectorXd x_raw;
  std::string category;
};

// --at accepts either inline "factor=value,..." pairs or a CSV of configs.
std::vector<ConfigQuery> parse_at(const std::string& at,
                                  const ModelBundle& bundle) {
  const DatasetSchema& schema = bundle.schema;
  std::vector<ConfigQuery> queries;
  if (at.find('=') != std::string::npos) {
    ConfigQuery q;
    q.x_raw.resize(static_cast<Eigen::Index>(schema.numeric_cols.size()));
    std::vector<bool> seen(schema.numeric_cols.size(), false);
    std::vector<std::string> cat_parts(schema.categorical_cols.size());
    for (const auto& pair : split_list(at)) {
      const std::size_t eq = pair.find('=');
      if (eq == std::string::npos)
        throw input_error("expected factor=value, got '" + pair + "'");
      const std::string key = pair.substr(0, eq);
      const std::string value = pair.substr(eq + 1);
      bool matched = false;
      for (std::size_t l = 0; l < schema.numeric_cols.size(); ++l) {
        if (schema.numeric_cols[l] != key) continue;
        try {
          q.x_raw[static_cast<Eigen::Index>(l)] = std::stod(value);
        } catch (const std::exception&) {
          throw input_error("non-numeric value for '" + key + "'");
        }
        seen[l] = true;
        matched = true;
      }
      for (std::size_t l = 0; l < schema.categorical_cols.size(); ++l) {
        if (schema.categorical_cols[l] != key) continue;
        cat_parts[l] = value;
        matched = true;
      }
      if (!matched) throw input_error("unknown factor '" + key + "'");
    }
    for (std::size_t l = 0; l < seen.size(); ++l)
      if (!seen[l])
        throw input_error("missing numeric factor '" +
                          schema.numeric_cols[l] + "'");
    std::string cat;
    for (std::size_t l = 0; l < cat_parts.size(); ++l) {
      if (cat_parts[l].empty() && !schema.categorical_cols.empty())
        throw input_error("missing categorical factor '" +
                          schema.categorical_cols[l] + "'");
      if (l) cat.push_back('|');
      cat += cat_parts[l];
    }
    q.category = cat;
    queries.push_back(std::move(q));
    return queries;
  }

  // CSV of configurations, one per row.
  std::ifstream in(at);
  if (!in) throw input_error("cannot open '" + at + "'");
  std::string line;
  if (!std::getline(in, line)) throw input_error("empty file '" + at + "'");
  std::vector<std::string> header;
  {
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        header.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur.push_back(ch);
      }
    }
    header.push_back(cur);
  }
  auto find_col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw input_error("missing column '" + name + "' in '" + at + "'");
  };
  std::vector<int> numeric_idx, cat_idx;
  for (const auto& c : schema.numeric_cols) numeric_idx.push_back(find_col(c));
  for (const auto& c : schema.categorical_cols) cat_idx.push_back(find_col(c));

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur.push_back(ch);
      }
    }
    fields.push_back(cur);
    ConfigQuery q;
    q.x_raw.resize(static_cast<Eigen::Index>(numeric_idx.size()));
    for (std::size_t l = 0; l < numeric_idx.size(); ++l) {
      try {
        q.x_raw[static_cast<Eigen::Index>(l)] =
            std::stod(fields.at(numeric_idx[l]));
      } catch (const std::exception&) {
        throw input_error("line " + std::to_string(line_no) +
                          ": bad numeric value");
      }
    }
    std::string cat;
    for (std::size_t l = 0; l < cat_idx.size(); ++l) {
      if (l) cat.push_back('|');
      cat += fields.at(cat_idx[l]);
    }
    q.category = cat;
    queries.push_back(std::move(q));
  }
  return queries;
}

void warn_if_outside_hull(const ModelBundle& bundle,
                          const Eigen::VectorXd& x) {
  const Eigen::MatrixXd& X = bundle.model.X;
  for (Eigen::Index l = 0; l < x.size(); ++l) {
    if (x[l] < X.col(l).minCoeff() || x[l] > X.col(l).maxCoeff()) {
      std::cerr << "warning: input outside the training range of '"
                << bundle.schema.numeric_cols[static_cast<std::size_t>(l)]
                << "'; predictions may be poor\n";
      return;
    }
  }
}

int run(int argc, char** argv) {
  CLI::App app{
      "distpred: distributional prediction of stochastic system outcomes "
      "from mixed numeric/categorical configurations"};
  app.require_subcommand(1);

  // ---- fit ----
  auto* fit_cmd = app.add_subcommand(
      "fit", "fit a model and write it to a model file");
  std::string fit_data, fit_out = "model.json", fit_variant = "lmgp";
  int fit_dprime = -1, fit_knots = 20, fit_order = 3;
  double fit_threshold = -1.0;
  bool fit_trunc_intercept = false;
  SchemaFlags fit_schema;
  EmFlags fit_em;
  fit_cmd->add_option("data", fit_data, "training CSV")->required();
  fit_cmd->add_option("--variant", fit_variant, "gp|cgp|lmgp|lmgp-s");
  fit_cmd->add_option("--dprime", fit_dprime, "retained SVD components");
  fit_cmd->add_option("--svd-threshold", fit_threshold,
                      "singular-value fraction threshold (default 0.8)");
  fit_cmd->add_option("--knots", fit_knots, "interior spline knots");
  fit_cmd->add_option("--order", fit_order, "spline order");
  fit_cmd->add_flag("--truncate-intercept", fit_trunc_intercept,
                    "clamp a negative predicted intercept to zero");
  fit_cmd->add_option("--out", fit_out, "output model file");
  fit_schema.attach(fit_cmd);
  fit_em.attach(fit_cmd);

  // ---- predict ----
  auto* pred_cmd = app.add_subcommand(
      "predict", "predict the quantile function and CDF at a configuration");
  std::string pred_model, pred_at, pred_probs;
  int pred_grid = 101;
  pred_cmd->add_option("model", pred_model, "model file")->required();
  pred_cmd->add_option("--at", pred_at,
                       "inline factor=value,... or a CSV of configurations")
      ->required();
  pred_cmd->add_option("--probs", pred_probs, "probabilities to tabulate");
  pred_cmd->add_option("--grid", pred_grid, "grid size for the curves");

  // ---- evaluate ----
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "repeated train/test evaluation with the EL1 metric");
  std::string eval_data, eval_variants = "lmgp,lmgp-s,gp,cgp";
  std::string eval_props = "0.3,0.4,0.5,0.6,0.7", eval_out = "report";
  std::string eval_variant_unused;
  int eval_repeats = 100, eval_knots = 20, eval_order = 3, eval_dprime = -1;
  double eval_threshold = -1.0;
  std::uint64_t eval_seed = 0;
  SchemaFlags eval_schema;
  EmFlags eval_em;
  eval_cmd->add_option("data", eval_data, "dataset CSV")->required();
  eval_cmd->add_option("--variants", eval_variants, "comma list of variants");
  eval_cmd->add_option("--train-props", eval_props,
                       "training proportions, e.g. 0.3,0.5,0.7");
  eval_cmd->add_option("--repeats", eval_repeats, "splits per proportion");
  eval_cmd->add_option("--seed", eval_seed, "split seed");
  eval_cmd->add_option("--knots", eval_knots, "interior spline knots");
  eval_cmd->add_option("--order", eval_order, "spline order");
  eval_cmd->add_option("--dprime", eval_dprime, "retained SVD components");
  eval_cmd->add_option("--svd-threshold", eval_threshold,
                       "singular-value fraction threshold");
  eval_cmd->add_option("--out", eval_out,
                       "output prefix (<out>.csv and <out>.txt)");
  eval_schema.attach(eval_cmd);
  eval_em.attach(eval_cmd);

  // ---- summary ----
  auto* sum_cmd = app.add_subcommand(
      "summary", "summary statistics from the predicted quantile function");
  std::string sum_model, sum_at;
  std::string sum_probs = "0.05,0.1,0.25,0.5,0.75,0.9,0.95";
  sum_cmd->add_option("model", sum_model, "model file")->required();
  sum_cmd->add_option("--at", sum_at, "inline factor=value,... or CSV")
      ->required();
  sum_cmd->add_option("--probs", sum_probs, "quantile probabilities");

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand(
      "simulate", "generate a synthetic dataset with a known ground truth");
  std::string sim_spec_path, sim_out = "simulated.csv";
  std::uint64_t sim_seed = 0;
  bool sim_print_spec = false;
  sim_cmd->add_option("--spec", sim_spec_path, "generator spec (JSON)");
  sim_cmd->add_option("--seed", sim_seed, "generator seed");
  sim_cmd->add_option("--out", sim_out, "output CSV");
  sim_cmd->add_flag("--print-spec", sim_print_spec,
                    "print the effective generator spec and exit");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand(fit_cmd)) {
    DatasetSchema schema = fit_schema.resolve(fit_data);
    Dataset ds = preprocess(load_dataset(fit_data, schema));
    FitOptions opts;
    opts.variant = parse_variant(fit_variant);
    opts.order = fit_order;
    opts.knots = fit_knots;
    if (fit_dprime > 0) opts.dprime = fit_dprime;
    if (fit_threshold > 0.0) opts.svd_threshold = fit_threshold;
    opts.truncate_intercept = fit_trunc_intercept;
    opts.em = fit_em.resolve();

    ModelBundle bundle;
    bundle.model = fit_model(ds, opts);
    bundle.schema = schema;
    bundle.category_names = ds.category_names;
    save_model(fit_out, bundle);

    int converged = 0;
    for (char f : bundle.model.component_converged) converged += f != 0;
    std::cout << "fit " << variant_name(opts.variant) << ": n=" << ds.n()
              << " categories=" << ds.categories()
              << " d=" << bundle.model.V.rows()
              << " dprime=" << bundle.model.dprime << " converged "
              << converged << "/" << bundle.model.dprime << "\n"
              << "model written to " << fit_out << "\n";
    return 0;
  }

  if (app.got_subcommand(pred_cmd)) {
    const ModelBundle bundle = load_model(pred_model);
    const std::vector<ConfigQuery> queries = parse_at(pred_at, bundle);
    const std::vector<double> probs =
        pred_probs.empty() ? std::vector<double>{} : split_doubles(pred_probs);
    char buf[128];
    for (const auto& q : queries) {
      const Eigen::VectorXd x = transform_point(bundle.schema, q.x_raw);
      warn_if_outside_hull(bundle, x);
      const int z0 = bundle.category_code(q.category);

      std::vector<double> p_grid(static_cast<std::size_t>(pred_grid));
      for (int i = 0; i < pred_grid; ++i)
        p_grid[static_cast<std::size_t>(i)] = i / (pred_grid - 1.0);
      const DistributionPrediction dp =
          predict_distribution(x, z0, bundle.model, p_grid);

      std::cout << "# quantile function (" << q.category << ")\np,Q\n";
      for (int i = 0; i < pred_grid; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n",
                      p_grid[static_cast<std::size_t>(i)],
                      dp.quantiles[static_cast<std::size_t>(i)]);
        std::cout << buf;
      }
      if (!probs.empty()) {
        std::cout << "# requested quantiles\np,Q\n";
        for (double p : probs) {
          std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p,
                        eval_quantile(dp.fit, bundle.model.basis, p));
          std::cout << buf;
        }
      }
      const CdfCurve cdf =
          make_cdf_curve(dp.fit, bundle.model.basis, pred_grid);
      std::cout << "# cdf\ny,F\n";
      for (std::size_t i = 0; i < cdf.y.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", cdf.y[i], cdf.F[i]);
        std::cout << buf;
      }
    }
    return 0;
  }

  if (app.got_subcommand(eval_cmd)) {
    DatasetSchema schema = eval_schema.resolve(eval_data);
    Dataset ds = preprocess(load_dataset(eval_data, schema));
    EvaluationConfig cfg;
    cfg.variants.clear();
    for (const auto& v : split_list(eval_variants))
      cfg.variants.push_back(parse_variant(v));
    cfg.train_props = split_doubles(eval_props);
    cfg.repeats = eval_repeats;
    cfg.seed = eval_seed;
    cfg.fit.order = eval_order;
    cfg.fit.knots = eval_knots;
    if (eval_dprime > 0) cfg.fit.dprime = eval_dprime;
    if (eval_threshold > 0.0) cfg.fit.svd_threshold = eval_threshold;
    cfg.fit.em = eval_em.resolve();

    const EvaluationReport report = evaluate(ds, cfg);
    {
      std::ofstream csv(eval_out + ".csv");
      if (!csv) throw input_error("cannot write '" + eval_out + ".csv'");
      csv << report.to_csv();
      std::ofstream txt(eval_out + ".txt");
      if (!txt) throw input_error("cannot write '" + eval_out + ".txt'");
      txt << report.to_text();
    }
    std::cout << report.to_text();
    return 0;
  }

  if (app.got_subcommand(sum_cmd)) {
    const ModelBundle bundle = load_model(sum_model);
    const std::vector<ConfigQuery> queries = parse_at(sum_at, bundle);
    const std::vector<double> probs = split_doubles(sum_probs);
    char buf[128];
    std::cout << "config,stat,value\n";
    for (const auto& q : queries) {
      const Eigen::VectorXd x = transform_point(bundle.schema, q.x_raw);
      warn_if_outside_hull(bundle, x);
      const int z0 = bundle.category_code(q.category);
      const DistributionPrediction dp =
          predict_distribution(x, z0, bundle.model, {});
      const SummaryStats stats =
          summary_stats(dp.fit, bundle.model.basis, probs);
      std::snprintf(buf, sizeof(buf), "%s,mean,%.17g\n", q.category.c_str(),
                    stats.mean);
      std::cout << buf;
      std::snprintf(buf, sizeof(buf), "%s,sd,%.17g\n", q.category.c_str(),
                    stats.sd);
      std::cout << buf;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%s,q%.17g,%.17g\n",
                      q.category.c_str(), probs[i], stats.quantiles[i]);
        std::cout << buf;
      }
    }
    return 0;
  }

  if (app.got_subcommand(sim_cmd)) {
    SimSpec spec;
    if (sim_spec_path.empty()) {
      spec = SimSpec::example();
    } else {
      std::ifstream in(sim_spec_path);
      if (!in) throw input_error("cannot open '" + sim_spec_path + "'");
      std::ostringstream ss;
      ss << in.rdbuf();
      spec = SimSpec::from_json(ss.str());
    }
    if (sim_print_spec) {
      std::cout << spec.to_json() << "\n";
      return 0;
    }
    const Simulation sim = simulate(spec, sim_seed);
    write_dataset_csv(sim_out, sim.dataset);
    std::cout << "simulated " << sim.dataset.n() << " configurations x "
              << spec.replicates << " replicates -> " << sim_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const distpred::input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const distpred::numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
