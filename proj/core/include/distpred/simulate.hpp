#ifndef DISTPRED_SIMULATE_HPP
#define DISTPRED_SIMULATE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "distpred/dataset.hpp"

namespace distpred {

// One Gaussian mixture component whose weight and mean vary smoothly in x.
struct MixtureComponentSpec {
  double weight0 = 0.0;          // softmax intercept
  Eigen::VectorXd weight_slope;  // length p (zero-filled if shorter)
  double mean0 = 0.0;
  Eigen::VectorXd mean_slope;    // length p
  double mean_quad = 0.0;        // coefficient on |x|^2
  double sd = 0.1;
};

// Generator settings: configurations on a grid (or uniform at random) in
// [0,1]^p, replicated mixture draws, and a smooth additive category shift
// field with cross-category correlation.
struct SimSpec {
  int num_numeric = 2;
  int categories = 3;
  int replicates = 200;
  int configs_per_category = 50;
  std::string design = "grid";  // "grid" or "random"
  std::vector<MixtureComponentSpec> components;
  double shift_scale = 1.0;
  double shift_corr = 0.8;  // equicorrelation of shift coefficients
  int shift_terms = 3;      // smooth basis terms of the shift field

  static SimSpec from_json(const std::string& text);
  std::string to_json() const;
  void validate() const;

  // Two well-separated components; handy default for smoke runs.
  static SimSpec example();
};

struct Simulation;
class SimOracle;
Simulation simulate(const SimSpec& spec, std::uint64_t seed);

// Ground-truth handle: exact mixture CDF and quantile function at any
// configuration, for error measurement against the generating process.
class SimOracle {
 public:
  double true_cdf(const Eigen::VectorXd& x, int category, double y) const;
  // Quantile by bisection on the mixture CDF.
  double true_quantile(const Eigen::VectorXd& x, int category,
                       double p) const;

 private:
  friend Simulation simulate(const SimSpec& spec, std::uint64_t seed);

  struct ShiftTerm {
    Eigen::VectorXd direction;  // per numeric input
    double phase = 0.0;
    Eigen::VectorXd coef;       // one coefficient per category
  };

  SimSpec spec_;
  std::vector<ShiftTerm> shift_;

  double shift_at(const Eigen::VectorXd& x, int category) const;
  void mixture_at(const Eigen::VectorXd& x, int category,
                  std::vector<double>& weights, std::vector<double>& means,
                  std::vector<double>& sds) const;
};

struct Simulation {
  Dataset dataset;
  SimOracle oracle;
};

Simulation simulate(const SimSpec& spec, std::uint64_t seed);

}  // namespace distpred

#endif
