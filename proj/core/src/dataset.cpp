#include "distpred/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "distpred/errors.hpp"

namespace distpred {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
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
  return fields;
}

double parse_double(const std::string& text, int line_no,
                    const std::string& col) {
  std::size_t pos = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty() || !std::isfinite(value))
    throw input_error("line " + std::to_string(line_no) +
                      ": non-numeric value '" + text + "' in column '" + col +
                      "'");
  return value;
}

int find_column(const std::vector<std::string>& header,
                const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  throw input_error("missing column '" + name + "'");
}

std::string join_labels(const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out.push_back('|');
    out += labels[i];
  }
  return out;
}

}  // namespace

std::vector<int> Dataset::category_sizes() const {
  std::vector<int> sizes(categories(), 0);
  for (int code : z) ++sizes[code];
  return sizes;
}

Dataset load_dataset(const std::string& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open '" + path + "'");
  if (schema.numeric_cols.empty())
    throw input_error("schema declares no numeric columns");
  if (schema.outcome_col.empty())
    throw input_error("schema declares no outcome column");
  if (!(schema.outcome_scale > 0.0))
    throw input_error("outcome scale must be positive");

  std::string line;
  if (!std::getline(in, line)) throw input_error("empty file '" + path + "'");
  const std::vector<std::string> header = split_csv_line(line);

  std::vector<int> numeric_idx, cat_idx;
  for (const auto& c : schema.numeric_cols)
    numeric_idx.push_back(find_column(header, c));
  for (const auto& c : schema.categorical_cols)
    cat_idx.push_back(find_column(header, c));
  const int outcome_idx = find_column(header, schema.outcome_col);

  const int p = static_cast<int>(numeric_idx.size());

  // Grouping key: category labels first so the final sort is by categorical
  // combination, then by the numeric tuple.
  struct Group {
    std::vector<double> x;
    std::string cat;
    std::vector<double> values;
  };
  std::map<std::pair<std::string, std::vector<double>>, Group> groups;

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw input_error("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    std::vector<double> x(p);
    for (int l = 0; l < p; ++l)
      x[l] = parse_double(fields[numeric_idx[l]], line_no,
                          schema.numeric_cols[l]);
    std::vector<std::string> labels;
    labels.reserve(cat_idx.size());
    for (int ci : cat_idx) labels.push_back(fields[ci]);
    const double y = parse_double(fields[outcome_idx], line_no,
                                  schema.outcome_col) /
                     schema.outcome_scale;

    Group& g = groups[{join_labels(labels), x}];
    if (g.values.empty()) {
      g.x = x;
      g.cat = join_labels(labels);
    }
    g.values.push_back(y);
  }
  if (groups.empty())
    throw input_error("no data rows in '" + path + "'");

  Dataset ds;
  ds.schema = schema;
  const int n = static_cast<int>(groups.size());
  ds.X_raw.resize(n, p);
  ds.z.reserve(n);
  ds.samples.reserve(n);

  int row = 0;
  std::string prev_cat;
  for (auto& [key, g] : groups) {
    if (ds.category_names.empty() || g.cat != prev_cat) {
      ds.category_names.push_back(g.cat);
      prev_cat = g.cat;
    }
    for (int l = 0; l < p; ++l) ds.X_raw(row, l) = g.x[l];
    ds.z.push_back(static_cast<int>(ds.category_names.size()) - 1);
    ds.samples.push_back(std::move(g.values));
    ++row;
  }
  ds.X = ds.X_raw;
  return ds;
}

Dataset preprocess(Dataset dataset) {
  const DatasetSchema& schema = dataset.schema;
  dataset.X = dataset.X_raw;
  for (const auto& col : schema.log2_cols) {
    int l = -1;
    for (std::size_t i = 0; i < schema.numeric_cols.size(); ++i)
      if (schema.numeric_cols[i] == col) l = static_cast<int>(i);
    if (l < 0)
      throw input_error("log2 column '" + col + "' is not a numeric column");
    for (int i = 0; i < dataset.n(); ++i) {
      if (!(dataset.X_raw(i, l) > 0.0))
        throw input_error("column '" + col + "': log2 of nonpositive value " +
                          std::to_string(dataset.X_raw(i, l)));
      dataset.X(i, l) = std::log2(dataset.X_raw(i, l));
    }
  }
  dataset.preprocessed = true;
  return dataset;
}

Eigen::VectorXd transform_point(const DatasetSchema& schema,
                                const Eigen::VectorXd& raw) {
  if (raw.size() != static_cast<Eigen::Index>(schema.numeric_cols.size()))
    throw input_error("numeric input dimension mismatch");
  Eigen::VectorXd x = raw;
  for (const auto& col : schema.log2_cols) {
    for (std::size_t i = 0; i < schema.numeric_cols.size(); ++i) {
      if (schema.numeric_cols[i] != col) continue;
      if (!(raw[static_cast<Eigen::Index>(i)] > 0.0))
        throw input_error("column '" + col + "': log2 of nonpositive value");
      x[static_cast<Eigen::Index>(i)] =
          std::log2(raw[static_cast<Eigen::Index>(i)]);
    }
  }
  return x;
}

void write_dataset_csv(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw input_error("cannot write '" + path + "'");
  const DatasetSchema& schema = dataset.schema;

  for (const auto& c : schema.numeric_cols) out << c << ',';
  for (const auto& c : schema.categorical_cols) out << c << ',';
  out << schema.outcome_col << '\n';

  char buf[64];
  for (int i = 0; i < dataset.n(); ++i) {
    // Combined labels decompose on the separator they were joined on.
    std::string cat = dataset.category_names[dataset.z[i]];
    std::replace(cat.begin(), cat.end(), '|', ',');
    for (double y : dataset.samples[i]) {
      for (int l = 0; l < dataset.p(); ++l) {
        std::snprintf(buf, sizeof(buf), "%.17g", dataset.X_raw(i, l));
        out << buf << ',';
      }
      out << cat << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", y * schema.outcome_scale);
      out << buf << '\n';
    }
  }
}

}  // namespace distpred
