#ifndef DISTPRED_DATASET_HPP
#define DISTPRED_DATASET_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace distpred {

// Column roles and declared transforms for a long-format CSV: one row per
// replicate, columns = numeric factors, categorical factors, outcome.
struct DatasetSchema {
  std::vector<std::string> numeric_cols;
  std::vector<std::string> categorical_cols;
  std::string outcome_col;
  std::vector<std::string> log2_cols;  // numeric columns stored as log2
  double outcome_scale = 1.0;          // outcome divided by this on load
};

// Replicated measurements grouped by configuration, rows sorted by the
// categorical combination (then by the numeric tuple).
struct Dataset {
  Eigen::MatrixXd X_raw;  // n x p numeric factors as read
  Eigen::MatrixXd X;      // n x p modeling scale (log2 applied)
  std::vector<int> z;     // category codes 0..c-1, nondecreasing
  std::vector<std::string> category_names;
  std::vector<std::vector<double>> samples;  // replicates per configuration
  DatasetSchema schema;
  bool preprocessed = false;

  int n() const { return static_cast<int>(samples.size()); }
  int p() const { return static_cast<int>(X.cols()); }
  int categories() const { return static_cast<int>(category_names.size()); }
  std::vector<int> category_sizes() const;
};

// Parses, groups replicates per unique configuration and sorts by category.
// Errors cite the offending line number.
Dataset load_dataset(const std::string& path, const DatasetSchema& schema);

// Applies the declared log2 transforms to X. Fails on nonpositive cells.
Dataset preprocess(Dataset dataset);

// Maps a raw-scale numeric input to the modeling scale of a preprocessed
// dataset (the transform record travels with the schema).
Eigen::VectorXd transform_point(const DatasetSchema& schema,
                                const Eigen::VectorXd& raw);

// One row per replicate, suitable for load_dataset round-trips.
void write_dataset_csv(const std::string& path, const Dataset& dataset);

}  // namespace distpred

#endif
