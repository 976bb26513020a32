#ifndef DISTPRED_LMGP_HPP
#define DISTPRED_LMGP_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "distpred/curve.hpp"
#include "distpred/dimred.hpp"
#include "distpred/kernels.hpp"

namespace distpred {

// Model family for one score column w = mean + effect + residual:
//   gp     - per-category independent GPs, no cross-category effect
//   cgp    - cross-category effect with no distance taper
//   lmgp   - full model, parameters shared across categories
//   lmgp_s - full model with per-category mean/variance/lengthscale/nugget
enum class Variant { gp, cgp, lmgp, lmgp_s };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

// One decorrelated score column together with its category-sorted design.
struct ComponentData {
  Eigen::VectorXd w;
  Eigen::MatrixXd X;
  std::vector<int> z;                // nondecreasing codes 0..c-1
  std::vector<int> category_sizes;   // n_k, sums to n

  int n() const { return static_cast<int>(w.size()); }
  int p() const { return static_cast<int>(X.cols()); }
  int categories() const { return static_cast<int>(category_sizes.size()); }
  int category_offset(int k) const;

  static ComponentData make(Eigen::VectorXd w, Eigen::MatrixXd X,
                            std::vector<int> z);
};

struct LmgpParams {
  Variant variant = Variant::lmgp;
  Eigen::VectorXd mean;         // length 1, or c for per-category variants
  Eigen::VectorXd resid_var;    // sigma^2 of the residual process, 1 or c
  Eigen::MatrixXd lengthscale;  // p x 1, or p x c
  Eigen::VectorXd nugget;       // length 1 or c
  double effect_var = 0.0;      // sigma^2 of the cross-category effect
  std::vector<double> angles;   // hypersphere angles, c(c-1)/2
  double support_radius = 0.0;  // taper range; +inf disables the taper
  double support_exponent = 0.0;

  bool per_category() const {
    return variant == Variant::gp || variant == Variant::lmgp_s;
  }
  bool has_effect() const { return variant != Variant::gp; }

  // Kernel parameters for category k (or the shared set).
  NumericKernelParams kernel(int k) const;
  double mean_of(int k) const;
  double resid_var_of(int k) const;
  Eigen::VectorXd mean_vector(const ComponentData& data) const;
};

// Posterior of the centered effect vector given the scores.
struct AlphaPosterior {
  Eigen::VectorXd mean;  // sums to zero
  Eigen::MatrixXd cov;
};

Eigen::MatrixXd build_omega_eps(const ComponentData& data,
                                const LmgpParams& params);
Eigen::MatrixXd build_sigma_eps(const ComponentData& data,
                                const LmgpParams& params);
Eigen::MatrixXd build_omega_alpha(const ComponentData& data,
                                  const LmgpParams& params);

AlphaPosterior e_step(const ComponentData& data, const LmgpParams& params);

// Expected complete-data log-likelihood pieces at the given parameters,
// with the posterior held fixed.
double q1_value(const ComponentData& data, const LmgpParams& params,
                const AlphaPosterior& post);
double q2_value(const ComponentData& data, const LmgpParams& params,
                const AlphaPosterior& post);

// Observed-data Gaussian log-likelihood of w under the marginal covariance.
double observed_loglik(const ComponentData& data, const LmgpParams& params);

struct MStepClosed {
  Eigen::VectorXd mean;       // 1 or c entries
  Eigen::VectorXd resid_var;  // 1 or c entries
  double effect_var = 0.0;    // 0 when the model has no effect term
};

// Closed-form maximizers of Q1/Q2 in (mean, residual variance, effect
// variance) for fixed lengthscale, nugget and angles.
MStepClosed m_step_closed(const ComponentData& data,
                          const AlphaPosterior& post,
                          const LmgpParams& params);

// Analytic gradients of the profiled Q1 (over lengthscale and nugget) and
// profiled Q2 (over angles), with the mean update held fixed. For
// per-category variants the kernel gradient concatenates the category
// blocks: [nu_1..nu_p, g] for each category in order.
struct ProfileGradients {
  Eigen::VectorXd kernel;  // d(profile Q1)/d(nu, g)
  Eigen::VectorXd angles;  // d(profile Q2)/d(theta)
  double q1_profile = 0.0;
  double q2_profile = 0.0;
};

ProfileGradients profile_gradients(const ComponentData& data,
                                   const LmgpParams& params,
                                   const AlphaPosterior& post);

struct EmConfig {
  int max_iter = 200;
  double tol = 1e-6;   // relative change of observed-data log-likelihood
  int starts = 1;
  int inner_max_iter = 40;  // optimizer iteration cap per M-step
  std::optional<double> fixed_nugget;     // pin g instead of optimizing it
  std::optional<double> support_radius;   // default: median pairwise distance
  std::optional<double> support_exponent; // default: floor(p/2) + 1
  std::uint64_t seed = 0;  // jitter for extra starts
};

struct FitResult {
  LmgpParams params;
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;         // Q1+Q2 at each E-step's fresh posterior
  // Q1+Q2 after the M-step, same posterior: the M-step ascent guarantee is
  // trace_after_update[t] >= trace[t]. The observed-data log-likelihood is
  // the monotone EM criterion; the cross-iteration Q sequence itself drifts
  // with the posterior entropy and carries no guarantee.
  std::vector<double> trace_after_update;
  std::vector<double> loglik_trace;  // observed-data log-likelihood
  double max_jitter_used = 0.0;
};

FitResult fit_em(const ComponentData& data, Variant variant,
                 const EmConfig& config = {});

// LMGP-S: per-category mean/variance/lengthscale/nugget, shared effect.
FitResult fit_em_per_category(const ComponentData& data,
                              const EmConfig& config = {});

// Reusable single-component predictor: one factorization, many points.
struct ComponentPredictor {
  Eigen::MatrixXd X;
  std::vector<int> z;
  LmgpParams params;
  Eigen::MatrixXd P;           // category correlation (empty when no effect)
  Eigen::VectorXd weights;     // (Sigma_eps + Sigma_alpha)^{-1} (w - mean)
};

ComponentPredictor make_predictor(const ComponentData& data,
                                  const LmgpParams& params);

double predict_score(const ComponentPredictor& pred,
                     const Eigen::VectorXd& x0, int z0);

// Conditional-mean prediction of one score at a new configuration.
double predict_w(const Eigen::VectorXd& x0, int z0,
                 const ComponentData& data, const LmgpParams& params);

// Complete fitted pipeline state for one dataset: spline basis, retained SVD
// rotation, and the per-component models with their training scores.
struct FittedModel {
  ISplineBasis basis{3, 20};
  Eigen::MatrixXd V;       // d x d right singular vectors
  Eigen::VectorXd lambda;  // d singular values
  int dprime = 0;
  bool truncate_intercept = false;
  Eigen::MatrixXd X;       // n x p training inputs (transformed scale)
  std::vector<int> z;      // category codes
  Eigen::MatrixXd W;       // n x dprime training scores
  std::vector<LmgpParams> components;
  std::vector<char> component_converged;
};

class ModelPredictor {
 public:
  explicit ModelPredictor(const FittedModel& model);

  Eigen::VectorXd predict_scores(const Eigen::VectorXd& x0, int z0) const;
  QuantileFit predict_fit(const Eigen::VectorXd& x0, int z0) const;

 private:
  const FittedModel* model_;
  std::vector<ComponentPredictor> comps_;
};

struct DistributionPrediction {
  QuantileFit fit;
  std::vector<double> quantiles;  // Q(p) over the supplied grid
};

DistributionPrediction predict_distribution(const Eigen::VectorXd& x0, int z0,
                                            const FittedModel& model,
                                            const std::vector<double>& p_grid);

}  // namespace distpred

#endif
