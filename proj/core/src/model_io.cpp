#include "distpred/model_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "distpred/errors.hpp"

namespace distpred {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw input_error("model file: expected matrix");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return {};
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols)
      throw input_error("model file: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

json params_to_json(const LmgpParams& p) {
  json j;
  j["variant"] = variant_name(p.variant);
  j["mean"] = vector_to_json(p.mean);
  j["resid_var"] = vector_to_json(p.resid_var);
  j["lengthscale"] = matrix_to_json(p.lengthscale);
  j["nugget"] = vector_to_json(p.nugget);
  j["effect_var"] = p.effect_var;
  j["angles"] = p.angles;
  j["support_radius"] = std::isinf(p.support_radius)
                            ? json("inf")
                            : json(p.support_radius);
  j["support_exponent"] = p.support_exponent;
  return j;
}

LmgpParams params_from_json(const json& j) {
  LmgpParams p;
  p.variant = parse_variant(j.at("variant").get<std::string>());
  p.mean = vector_from_json(j.at("mean"));
  p.resid_var = vector_from_json(j.at("resid_var"));
  p.lengthscale = matrix_from_json(j.at("lengthscale"));
  p.nugget = vector_from_json(j.at("nugget"));
  p.effect_var = j.at("effect_var").get<double>();
  p.angles = j.at("angles").get<std::vector<double>>();
  const auto& radius = j.at("support_radius");
  p.support_radius = radius.is_string()
                         ? std::numeric_limits<double>::infinity()
                         : radius.get<double>();
  p.support_exponent = j.at("support_exponent").get<double>();
  return p;
}

}  // namespace

int ModelBundle::category_code(const std::string& label) const {
  for (std::size_t k = 0; k < category_names.size(); ++k)
    if (category_names[k] == label) return static_cast<int>(k);
  throw input_error("category not in training set: '" + label + "'");
}

std::string serialize_model(const ModelBundle& bundle) {
  const FittedModel& m = bundle.model;
  json j;
  j["format"] = "distpred-model";
  j["version"] = 1;
  j["basis"] = {{"order", m.basis.order()},
                {"interior_knots",
                 static_cast<int>(m.basis.interior_knots().size())}};
  j["V"] = matrix_to_json(m.V);
  j["lambda"] = vector_to_json(m.lambda);
  j["dprime"] = m.dprime;
  j["truncate_intercept"] = m.truncate_intercept;
  j["X"] = matrix_to_json(m.X);
  j["z"] = m.z;
  j["W"] = matrix_to_json(m.W);
  j["components"] = json::array();
  for (const auto& c : m.components) j["components"].push_back(params_to_json(c));
  j["component_converged"] = json::array();
  for (char f : m.component_converged)
    j["component_converged"].push_back(f != 0);

  j["schema"] = {{"numeric_cols", bundle.schema.numeric_cols},
                 {"categorical_cols", bundle.schema.categorical_cols},
                 {"outcome_col", bundle.schema.outcome_col},
                 {"log2_cols", bundle.schema.log2_cols},
                 {"outcome_scale", bundle.schema.outcome_scale}};
  j["category_names"] = bundle.category_names;
  return j.dump(1);
}

ModelBundle deserialize_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw input_error(std::string("invalid model file: ") + e.what());
  }
  if (j.value("format", "") != "distpred-model")
    throw input_error("not a distpred model file");
  if (j.value("version", 0) != 1)
    throw input_error("unsupported model file version");

  ModelBundle bundle;
  FittedModel& m = bundle.model;
  m.basis = ISplineBasis(j.at("basis").at("order").get<int>(),
                         j.at("basis").at("interior_knots").get<int>());
  m.V = matrix_from_json(j.at("V"));
  m.lambda = vector_from_json(j.at("lambda"));
  m.dprime = j.at("dprime").get<int>();
  m.truncate_intercept = j.at("truncate_intercept").get<bool>();
  m.X = matrix_from_json(j.at("X"));
  m.z = j.at("z").get<std::vector<int>>();
  m.W = matrix_from_json(j.at("W"));
  for (const auto& cj : j.at("components"))
    m.components.push_back(params_from_json(cj));
  for (const auto& f : j.at("component_converged"))
    m.component_converged.push_back(f.get<bool>() ? 1 : 0);

  const auto& sj = j.at("schema");
  bundle.schema.numeric_cols =
      sj.at("numeric_cols").get<std::vector<std::string>>();
  bundle.schema.categorical_cols =
      sj.at("categorical_cols").get<std::vector<std::string>>();
  bundle.schema.outcome_col = sj.at("outcome_col").get<std::string>();
  bundle.schema.log2_cols = sj.at("log2_cols").get<std::vector<std::string>>();
  bundle.schema.outcome_scale = sj.at("outcome_scale").get<double>();
  bundle.category_names = j.at("category_names").get<std::vector<std::string>>();
  return bundle;
}

void save_model(const std::string& path, const ModelBundle& bundle) {
  std::ofstream out(path);
  if (!out) throw input_error("cannot write '" + path + "'");
  out << serialize_model(bundle);
}

ModelBundle load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace distpred
