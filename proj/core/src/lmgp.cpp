#include "distpred/lmgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "distpred/errors.hpp"
#include "distpred/linalg.hpp"
#include "distpred/optim.hpp"
#include "distpred/rng.hpp"

namespace distpred {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sample_variance(const Eigen::VectorXd& w) {
  if (w.size() < 2) return 0.0;
  const double m = w.mean();
  return (w.array() - m).square().sum() / static_cast<double>(w.size() - 1);
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::gp: return "gp";
    case Variant::cgp: return "cgp";
    case Variant::lmgp: return "lmgp";
    case Variant::lmgp_s: return "lmgp-s";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "gp") return Variant::gp;
  if (name == "cgp") return Variant::cgp;
  if (name == "lmgp") return Variant::lmgp;
  if (name == "lmgp-s" || name == "lmgp_s") return Variant::lmgp_s;
  throw input_error("unknown variant '" + name +
                    "' (expected gp|cgp|lmgp|lmgp-s)");
}

int ComponentData::category_offset(int k) const {
  int off = 0;
  for (int j = 0; j < k; ++j) off += category_sizes[j];
  return off;
}

ComponentData ComponentData::make(Eigen::VectorXd w, Eigen::MatrixXd X,
                                  std::vector<int> z) {
  if (w.size() != X.rows() ||
      static_cast<std::size_t>(w.size()) != z.size())
    throw input_error("score/design/label sizes do not match");
  if (!w.allFinite() || !X.allFinite())
    throw input_error("non-finite values in component data");
  validate_category_sorted(z);
  ComponentData data;
  data.w = std::move(w);
  data.X = std::move(X);
  data.z = std::move(z);
  if (!data.z.empty()) {
    const int c = data.z.back() + 1;
    data.category_sizes.assign(c, 0);
    for (int code : data.z) {
      if (code < 0) throw input_error("negative category code");
      ++data.category_sizes[code];
    }
    for (int k = 0; k < c; ++k)
      if (data.category_sizes[k] == 0)
        throw input_error("category codes must be contiguous from 0");
  }
  return data;
}

NumericKernelParams LmgpParams::kernel(int k) const {
  NumericKernelParams kp;
  const int col = per_category() ? k : 0;
  kp.lengthscale = lengthscale.col(col);
  kp.nugget = nugget[per_category() ? k : 0];
  return kp;
}

double LmgpParams::mean_of(int k) const {
  return mean[per_category() ? k : 0];
}

double LmgpParams::resid_var_of(int k) const {
  return resid_var[per_category() ? k : 0];
}

Eigen::VectorXd LmgpParams::mean_vector(const ComponentData& data) const {
  Eigen::VectorXd mu(data.n());
  for (int i = 0; i < data.n(); ++i) mu[i] = mean_of(data.z[i]);
  return mu;
}

namespace {

// Within-category kernel block for category k (correlation scale).
Eigen::MatrixXd kernel_block(const ComponentData& data, int k,
                             const Eigen::VectorXd& nu, double g) {
  const int off = data.category_offset(k);
  const int nk = data.category_sizes[k];
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(nk, nk);
  for (int i = 0; i < nk; ++i) {
    omega(i, i) = 1.0 + g;
    for (int j = i + 1; j < nk; ++j) {
      double dist = 0.0;
      for (int l = 0; l < data.p(); ++l) {
        const double d = data.X(off + i, l) - data.X(off + j, l);
        dist += d * d / nu[l];
      }
      omega(i, j) = omega(j, i) = std::exp(-dist);
    }
  }
  return omega;
}

Eigen::MatrixXd taper_matrix(const ComponentData& data, double radius,
                             double expo) {
  return build_taper(data.X, radius, expo);
}

Eigen::MatrixXd effect_corr_from_taper(const ComponentData& data,
                                       const Eigen::MatrixXd& P,
                                       const Eigen::MatrixXd& phi) {
  const int n = data.n();
  Eigen::MatrixXd omega(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      omega(i, j) = P(data.z[i], data.z[j]) * phi(i, j);
  return omega;
}

// Per-block statistics of the profiled Q1 objective and, optionally, their
// derivatives with respect to (nu_1..nu_p, g):
//   logdet = log|Omega_k|
//   quad   = r^T Omega_k^{-1} r + tr(Omega_k^{-1} Sa_kk)
struct Q1BlockStats {
  double logdet = 0.0;
  double quad = 0.0;
  Eigen::VectorXd d_logdet;  // p+1 entries
  Eigen::VectorXd d_quad;
  double jitter = 0.0;
};

Q1BlockStats q1_block_stats(const ComponentData& data, int k,
                            const Eigen::VectorXd& r_block,
                            const Eigen::MatrixXd* Sa_block,
                            const Eigen::VectorXd& nu, double g,
                            bool want_grad) {
  const int off = data.category_offset(k);
  const int nk = data.category_sizes[k];
  const int p = data.p();

  Eigen::MatrixXd omega = kernel_block(data, k, nu, g);
  SpdFactor fac = spd_factor(omega);

  Q1BlockStats st;
  st.jitter = fac.jitter;
  st.logdet = fac.log_det();
  const Eigen::VectorXd u = fac.solve(r_block);
  st.quad = r_block.dot(u);
  Eigen::MatrixXd M;  // Omega^{-1} Sa
  if (Sa_block) {
    M = fac.solve(*Sa_block);
    st.quad += M.trace();
  }
  if (!want_grad) return st;

  const Eigen::MatrixXd omega_inv =
      fac.solve(Eigen::MatrixXd::Identity(nk, nk));
  // N = Omega^{-1} Sa Omega^{-1} (symmetric)
  Eigen::MatrixXd N;
  if (Sa_block) N = fac.solve(M.transpose());

  st.d_logdet.resize(p + 1);
  st.d_quad.resize(p + 1);

  // exp-kernel part without the nugget: dOmega/dg = I.
  Eigen::MatrixXd expo = omega;
  expo.diagonal().array() -= g;

  for (int l = 0; l < p; ++l) {
    // dOmega/dnu_l = (dx_l^2 / nu_l^2) .* exp part
    double tr_inv_d = 0.0, u_d_u = 0.0, tr_n_d = 0.0;
    for (int i = 0; i < nk; ++i)
      for (int j = 0; j < nk; ++j) {
        if (i == j) continue;
        const double dx = data.X(off + i, l) - data.X(off + j, l);
        const double dv = dx * dx / (nu[l] * nu[l]) * expo(i, j);
        tr_inv_d += omega_inv(i, j) * dv;
        u_d_u += u[i] * dv * u[j];
        if (Sa_block) tr_n_d += N(i, j) * dv;
      }
    st.d_logdet[l] = tr_inv_d;
    st.d_quad[l] = -(u_d_u + tr_n_d);
  }
  st.d_logdet[p] = omega_inv.trace();
  st.d_quad[p] = -(u.squaredNorm() + (Sa_block ? N.trace() : 0.0));
  return st;
}

struct Q2Stats {
  double logdet = 0.0;
  double quad = 0.0;          // tr(Omega^{-1} Sa) + mu^T Omega^{-1} mu
  Eigen::VectorXd d_logdet;   // per angle
  Eigen::VectorXd d_quad;
  double jitter = 0.0;
};

Q2Stats q2_stats(const ComponentData& data, const std::vector<double>& angles,
                 const Eigen::MatrixXd& phi, const AlphaPosterior& post,
                 bool want_grad) {
  const int n = data.n();
  const int c = data.categories();
  const HypersphereCorr hc = hypersphere_corr(angles, c);
  const Eigen::MatrixXd omega = effect_corr_from_taper(data, hc.P, phi);
  SpdFactor fac = spd_factor(omega);

  Q2Stats st;
  st.jitter = fac.jitter;
  st.logdet = fac.log_det();
  const Eigen::VectorXd u = fac.solve(post.mean);
  const Eigen::MatrixXd M = fac.solve(post.cov);
  st.quad = post.mean.dot(u) + M.trace();
  if (!want_grad) return st;

  const Eigen::MatrixXd omega_inv =
      fac.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd N = fac.solve(M.transpose());

  const std::vector<Eigen::MatrixXd> dP =
      hypersphere_corr_derivatives(angles, c);
  st.d_logdet.resize(static_cast<Eigen::Index>(dP.size()));
  st.d_quad.resize(static_cast<Eigen::Index>(dP.size()));
  for (std::size_t t = 0; t < dP.size(); ++t) {
    double tr_inv_d = 0.0, u_d_u = 0.0, tr_n_d = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double dv = dP[t](data.z[i], data.z[j]) * phi(i, j);
        tr_inv_d += omega_inv(i, j) * dv;
        u_d_u += u[i] * dv * u[j];
        tr_n_d += N(i, j) * dv;
      }
    st.d_logdet[static_cast<Eigen::Index>(t)] = tr_inv_d;
    st.d_quad[static_cast<Eigen::Index>(t)] = -(u_d_u + tr_n_d);
  }
  return st;
}

Eigen::MatrixXd posterior_block(const AlphaPosterior& post, int off, int nk) {
  return post.cov.block(off, off, nk, nk);
}

}  // namespace

Eigen::MatrixXd build_omega_eps(const ComponentData& data,
                                const LmgpParams& params) {
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(data.n(), data.n());
  for (int k = 0; k < data.categories(); ++k) {
    const NumericKernelParams kp = params.kernel(k);
    const int off = data.category_offset(k);
    const int nk = data.category_sizes[k];
    omega.block(off, off, nk, nk) =
        kernel_block(data, k, kp.lengthscale, kp.nugget);
  }
  return omega;
}

Eigen::MatrixXd build_sigma_eps(const ComponentData& data,
                                const LmgpParams& params) {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(data.n(), data.n());
  for (int k = 0; k < data.categories(); ++k) {
    const NumericKernelParams kp = params.kernel(k);
    const int off = data.category_offset(k);
    const int nk = data.category_sizes[k];
    sigma.block(off, off, nk, nk) =
        params.resid_var_of(k) * kernel_block(data, k, kp.lengthscale,
                                              kp.nugget);
  }
  return sigma;
}

Eigen::MatrixXd build_omega_alpha(const ComponentData& data,
                                  const LmgpParams& params) {
  if (!params.has_effect())
    throw input_error("variant has no cross-category effect");
  const HypersphereCorr hc =
      hypersphere_corr(params.angles, data.categories());
  const Eigen::MatrixXd phi =
      taper_matrix(data, params.support_radius, params.support_exponent);
  return effect_corr_from_taper(data, hc.P, phi);
}

AlphaPosterior e_step(const ComponentData& data, const LmgpParams& params) {
  const int n = data.n();
  AlphaPosterior post;
  if (!params.has_effect() || params.effect_var == 0.0) {
    post.mean = Eigen::VectorXd::Zero(n);
    post.cov = Eigen::MatrixXd::Zero(n, n);
    return post;
  }

  const Eigen::MatrixXd sigma_alpha =
      params.effect_var * build_omega_alpha(data, params);
  Eigen::MatrixXd total = sigma_alpha + build_sigma_eps(data, params);
  SpdFactor fac = spd_factor(total);

  const Eigen::VectorXd resid = data.w - params.mean_vector(data);
  const Eigen::VectorXd mean_raw = sigma_alpha * fac.solve(resid);
  const Eigen::MatrixXd cov_raw =
      sigma_alpha - sigma_alpha * fac.solve(sigma_alpha);

  // Zero-sum centering: C = I - J/n applied to the mean and both sides of
  // the covariance.
  post.mean = mean_raw.array() - mean_raw.mean();
  const Eigen::VectorXd row_mean = cov_raw.rowwise().mean();
  const double grand = row_mean.mean();
  post.cov = cov_raw;
  post.cov.colwise() -= row_mean;
  post.cov.rowwise() -= row_mean.transpose();
  post.cov.array() += grand;
  post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
  return post;
}

double q1_value(const ComponentData& data, const LmgpParams& params,
                const AlphaPosterior& post) {
  const Eigen::VectorXd r = data.w - params.mean_vector(data) - post.mean;
  double value = -0.5 * data.n() * std::log(2.0 * M_PI);
  for (int k = 0; k < data.categories(); ++k) {
    const int off = data.category_offset(k);
    const int nk = data.category_sizes[k];
    const NumericKernelParams kp = params.kernel(k);
    const Eigen::MatrixXd Sa = posterior_block(post, off, nk);
    const Q1BlockStats st =
        q1_block_stats(data, k, r.segment(off, nk), &Sa, kp.lengthscale,
                       kp.nugget, false);
    const double s2 = params.resid_var_of(k);
    if (!(s2 > 0.0)) throw numeric_error("residual variance must be > 0");
    value += -0.5 * (nk * std::log(s2) + st.logdet) - 0.5 * st.quad / s2;
  }
  return value;
}

double q2_value(const ComponentData& data, const LmgpParams& params,
                const AlphaPosterior& post) {
  if (!params.has_effect() || !(params.effect_var > 0.0))
    throw numeric_error("effect covariance is not positive definite");
  const Eigen::MatrixXd phi =
      taper_matrix(data, params.support_radius, params.support_exponent);
  const Q2Stats st = q2_stats(data, params.angles, phi, post, false);
  const int n = data.n();
  return -0.5 * n * std::log(2.0 * M_PI) -
         0.5 * (n * std::log(params.effect_var) + st.logdet) -
         0.5 * st.quad / params.effect_var;
}

double observed_loglik(const ComponentData& data, const LmgpParams& params) {
  Eigen::MatrixXd total = build_sigma_eps(data, params);
  if (params.has_effect() && params.effect_var > 0.0)
    total += params.effect_var * build_omega_alpha(data, params);
  SpdFactor fac = spd_factor(total);
  const Eigen::VectorXd resid = data.w - params.mean_vector(data);
  return -0.5 * data.n() * std::log(2.0 * M_PI) - 0.5 * fac.log_det() -
         0.5 * resid.dot(fac.solve(resid));
}

MStepClosed m_step_closed(const ComponentData& data,
                          const AlphaPosterior& post,
                          const LmgpParams& params) {
  MStepClosed out;
  const int c = data.categories();
  const bool per_cat = params.per_category();
  const int groups = per_cat ? c : 1;
  out.mean.resize(groups);
  out.resid_var.resize(groups);

  // Mean update: 1^T Omega^{-1} (w - post.mean) / 1^T Omega^{-1} 1, block
  // structure collapsing to per-category ratios for per-category variants.
  double num_shared = 0.0, den_shared = 0.0;
  std::vector<SpdFactor> facs(c);
  for (int k = 0; k < c; ++k) {
    const int off = data.category_offset(k);
    const int nk = data.category_sizes[k];
    const NumericKernelParams kp = params.kernel(k);
    facs[k] = spd_factor(kernel_block(data, k, kp.lengthscale, kp.nugget));
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(nk);
    const Eigen::VectorXd a = facs[k].solve(ones);
    const double num =
        a.dot(data.w.segment(off, nk) - post.mean.segment(off, nk));
    const double den = a.sum();
    if (per_cat) {
      if (den == 0.0) throw numeric_error("zero denominator in mean update");
      out.mean[k] = num / den;
    } else {
      num_shared += num;
      den_shared += den;
    }
  }
  if (!per_cat) {
    if (den_shared == 0.0)
      throw numeric_error("zero denominator in mean update");
    out.mean[0] = num_shared / den_shared;
  }

  // Residual variance update.
  double quad_shared = 0.0;
  for (int k = 0; k < c; ++k) {
    const int off = data.category_offset(k);
    const int nk = data.category_sizes[k];
    const double mu_k = per_cat ? out.mean[k] : out.mean[0];
    const Eigen::VectorXd r = data.w.segment(off, nk).array() - mu_k;
    const Eigen::VectorXd rc = r - post.mean.segment(off, nk);
    const Eigen::MatrixXd Sa = posterior_block(post, off, nk);
    const double quad =
        rc.dot(facs[k].solve(rc)) + facs[k].solve(Sa).trace();
    if (per_cat)
      out.resid_var[k] = quad / nk;
    else
      quad_shared += quad;
  }
  if (!per_cat) out.resid_var[0] = quad_shared / data.n();

  // Effect variance update.
  if (params.has_effect()) {
    const Eigen::MatrixXd omega_alpha = build_omega_alpha(data, params);
    SpdFactor fac = spd_factor(omega_alpha);
    out.effect_var = (fac.solve(post.cov).trace() +
                      post.mean.dot(fac.solve(post.mean))) /
                     data.n();
  }
  return out;
}

ProfileGradients profile_gradients(const ComponentData& data,
                                   const LmgpParams& params,
                                   const AlphaPosterior& post) {
  ProfileGradients out;
  const int p = data.p();
  const int c = data.categories();
  const bool per_cat = params.per_category();
  const Eigen::VectorXd r = data.w - params.mean_vector(data) - post.mean;

  if (per_cat) {
    out.kernel.resize(static_cast<Eigen::Index>(c) * (p + 1));
    out.q1_profile = 0.0;
    for (int k = 0; k < c; ++k) {
      const int off = data.category_offset(k);
      const int nk = data.category_sizes[k];
      const NumericKernelParams kp = params.kernel(k);
      const Eigen::MatrixXd Sa = posterior_block(post, off, nk);
      const Q1BlockStats st = q1_block_stats(
          data, k, r.segment(off, nk), &Sa, kp.lengthscale, kp.nugget, true);
      const double s2 = st.quad / nk;
      out.q1_profile += -0.5 * st.logdet - 0.5 * nk * std::log(s2);
      out.kernel.segment(static_cast<Eigen::Index>(k) * (p + 1), p + 1) =
          -0.5 * st.d_logdet - (0.5 * nk / st.quad) * st.d_quad;
    }
  } else {
    const NumericKernelParams kp = params.kernel(0);
    double logdet = 0.0, quad = 0.0;
    Eigen::VectorXd d_logdet = Eigen::VectorXd::Zero(p + 1);
    Eigen::VectorXd d_quad = Eigen::VectorXd::Zero(p + 1);
    for (int k = 0; k < c; ++k) {
      const int off = data.category_offset(k);
      const int nk = data.category_sizes[k];
      const Eigen::MatrixXd Sa = posterior_block(post, off, nk);
      const Q1BlockStats st = q1_block_stats(
          data, k, r.segment(off, nk), &Sa, kp.lengthscale, kp.nugget, true);
      logdet += st.logdet;
      quad += st.quad;
      d_logdet += st.d_logdet;
      d_quad += st.d_quad;
    }
    const int n = data.n();
    out.q1_profile = -0.5 * logdet - 0.5 * n * std::log(quad / n);
    out.kernel = -0.5 * d_logdet - (0.5 * n / quad) * d_quad;
  }

  if (params.has_effect() && !params.angles.empty()) {
    const Eigen::MatrixXd phi =
        taper_matrix(data, params.support_radius, params.support_exponent);
    const Q2Stats st = q2_stats(data, params.angles, phi, post, true);
    const int n = data.n();
    out.q2_profile = -0.5 * st.logdet - 0.5 * n * std::log(st.quad / n);
    out.angles = -0.5 * st.d_logdet - (0.5 * n / st.quad) * st.d_quad;
  }
  return out;
}

namespace {

Eigen::VectorXd per_dim_median_sqdist(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows(), p = X.cols();
  Eigen::VectorXd med(p);
  std::vector<double> d2;
  for (Eigen::Index l = 0; l < p; ++l) {
    d2.clear();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d = X(i, l) - X(j, l);
        d2.push_back(d * d);
      }
    if (d2.empty()) {
      med[l] = 1.0;
      continue;
    }
    std::sort(d2.begin(), d2.end());
    const double m = d2[d2.size() / 2];
    med[l] = m > 0.0 ? m : 1.0;
  }
  return med;
}

LmgpParams initial_params(const ComponentData& data, Variant variant,
                          const EmConfig& config) {
  LmgpParams params;
  params.variant = variant;
  const int c = data.categories();
  const int p = data.p();
  const int groups = params.per_category() ? c : 1;

  params.mean.resize(groups);
  params.resid_var.resize(groups);
  params.nugget.resize(groups);
  params.lengthscale.resize(p, groups);

  const Eigen::VectorXd nu0 = per_dim_median_sqdist(data.X);
  const double g0 = config.fixed_nugget.value_or(1e-3);
  const double var0 = std::max(sample_variance(data.w), 1e-12);
  const bool effect = params.has_effect();

  for (int grp = 0; grp < groups; ++grp) {
    params.lengthscale.col(grp) = nu0;
    params.nugget[grp] = g0;
    if (params.per_category()) {
      const int off = data.category_offset(grp);
      const int nk = data.category_sizes[grp];
      params.mean[grp] = data.w.segment(off, nk).mean();
      params.resid_var[grp] = std::max(
          sample_variance(data.w.segment(off, nk)), 1e-12);
      if (effect) params.resid_var[grp] *= 0.5;
    } else {
      params.mean[grp] = data.w.mean();
      params.resid_var[grp] = effect ? 0.5 * var0 : var0;
    }
  }

  if (effect) {
    params.effect_var = 0.5 * var0;
    params.angles.assign(static_cast<std::size_t>(c) * (c - 1) / 2,
                         M_PI / 2.0);
    if (variant == Variant::cgp) {
      params.support_radius = kInf;
    } else {
      params.support_radius =
          config.support_radius.value_or(median_pairwise_distance(data.X));
      if (!(params.support_radius > 0.0)) params.support_radius = 1.0;
    }
    params.support_exponent =
        config.support_exponent.value_or(wendland_min_exponent(p));
    const double min_v = wendland_min_exponent(p);
    if (params.support_exponent < min_v)
      throw input_error("support exponent too small for positive definiteness");
  }
  return params;
}

// Inner M-step optimization of one kernel parameter block (nu, g) on the
// log scale, holding the mean update and posterior fixed.
void optimize_kernel_block(const ComponentData& data, LmgpParams& params,
                           int group, const Eigen::VectorXd& r,
                           const AlphaPosterior& post, const EmConfig& config,
                           double* max_jitter) {
  const int p = data.p();
  const bool per_cat = params.per_category();
  const bool fit_g = !config.fixed_nugget.has_value();
  const int dim = p + (fit_g ? 1 : 0);

  // Category blocks covered by this parameter group.
  const int k_lo = per_cat ? group : 0;
  const int k_hi = per_cat ? group + 1 : data.categories();
  int n_cov = 0;
  for (int k = k_lo; k < k_hi; ++k) n_cov += data.category_sizes[k];

  auto objective = [&](const Eigen::VectorXd& x,
                       Eigen::VectorXd& grad) -> double {
    Eigen::VectorXd nu(p);
    for (int l = 0; l < p; ++l) nu[l] = std::exp(x[l]);
    const double g =
        fit_g ? std::exp(x[p]) : config.fixed_nugget.value();

    double logdet = 0.0, quad = 0.0;
    Eigen::VectorXd d_logdet = Eigen::VectorXd::Zero(p + 1);
    Eigen::VectorXd d_quad = Eigen::VectorXd::Zero(p + 1);
    for (int k = k_lo; k < k_hi; ++k) {
      const int off = data.category_offset(k);
      const int nk = data.category_sizes[k];
      const Eigen::MatrixXd Sa = posterior_block(post, off, nk);
      const Q1BlockStats st = q1_block_stats(data, k, r.segment(off, nk),
                                             &Sa, nu, g, true);
      if (max_jitter) *max_jitter = std::max(*max_jitter, st.jitter);
      logdet += st.logdet;
      quad += st.quad;
      d_logdet += st.d_logdet;
      d_quad += st.d_quad;
    }
    if (!(quad > 0.0)) {
      grad.setZero(dim);
      return kInf;  // degenerate; reject the step
    }
    const double value =
        -0.5 * logdet - 0.5 * n_cov * std::log(quad / n_cov);
    Eigen::VectorXd dvalue = -0.5 * d_logdet - (0.5 * n_cov / quad) * d_quad;
    grad.resize(dim);
    for (int l = 0; l < p; ++l) grad[l] = -dvalue[l] * nu[l];  // chain: log
    if (fit_g) grad[p] = -dvalue[p] * g;
    return -value;
  };

  Eigen::VectorXd x0(dim);
  for (int l = 0; l < p; ++l)
    x0[l] = std::log(params.lengthscale(l, per_cat ? group : 0));
  if (fit_g) x0[p] = std::log(std::max(params.nugget[per_cat ? group : 0],
                                       1e-8));

  Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, -20.0);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(dim, 25.0);
  if (fit_g) {
    lo[p] = std::log(1e-8);
    hi[p] = std::log(20.0);
  }

  LbfgsOptions opt;
  opt.max_iter = config.inner_max_iter;
  opt.grad_tol = 1e-6;
  const LbfgsResult res = lbfgs_minimize(objective, x0, opt, &lo, &hi);

  const int col = per_cat ? group : 0;
  for (int l = 0; l < p; ++l)
    params.lengthscale(l, col) = std::exp(res.x[l]);
  params.nugget[col] =
      fit_g ? std::exp(res.x[p]) : config.fixed_nugget.value();
}

void optimize_angles(const ComponentData& data, LmgpParams& params,
                     const Eigen::MatrixXd& phi, const AlphaPosterior& post,
                     const EmConfig& config, double* max_jitter) {
  const int na = static_cast<int>(params.angles.size());
  if (na == 0) return;
  const int n = data.n();

  // theta in (0, pi) via scaled logit; d(theta)/dt = theta (pi - theta)/pi.
  auto to_angles = [&](const Eigen::VectorXd& t) {
    std::vector<double> a(static_cast<std::size_t>(na));
    for (int i = 0; i < na; ++i) a[i] = M_PI / (1.0 + std::exp(-t[i]));
    return a;
  };

  auto objective = [&](const Eigen::VectorXd& t,
                       Eigen::VectorXd& grad) -> double {
    const std::vector<double> angles = to_angles(t);
    const Q2Stats st = q2_stats(data, angles, phi, post, true);
    if (max_jitter) *max_jitter = std::max(*max_jitter, st.jitter);
    if (!(st.quad > 0.0)) {
      grad.setZero(na);
      return kInf;
    }
    const double value = -0.5 * st.logdet - 0.5 * n * std::log(st.quad / n);
    const Eigen::VectorXd dvalue =
        -0.5 * st.d_logdet - (0.5 * n / st.quad) * st.d_quad;
    grad.resize(na);
    for (int i = 0; i < na; ++i) {
      const double th = angles[static_cast<std::size_t>(i)];
      grad[i] = -dvalue[i] * th * (M_PI - th) / M_PI;
    }
    return -value;
  };

  Eigen::VectorXd t0(na);
  for (int i = 0; i < na; ++i) {
    const double th = params.angles[static_cast<std::size_t>(i)];
    t0[i] = std::log(th / (M_PI - th));
  }
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(na, -12.0);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(na, 12.0);

  LbfgsOptions opt;
  opt.max_iter = config.inner_max_iter;
  opt.grad_tol = 1e-6;
  const LbfgsResult res = lbfgs_minimize(objective, t0, opt, &lo, &hi);
  params.angles = to_angles(res.x);
}

FitResult fit_em_single(const ComponentData& data, LmgpParams params,
                        const EmConfig& config) {
  FitResult fr;
  const bool effect = params.has_effect();
  Eigen::MatrixXd phi;
  if (effect)
    phi = taper_matrix(data, params.support_radius,
                       params.support_exponent);

  double prev_ll = -kInf;
  for (int iter = 0; iter < config.max_iter; ++iter) {
    const AlphaPosterior post = e_step(data, params);

    double q = q1_value(data, params, post);
    if (effect && params.effect_var > 0.0) q += q2_value(data, params, post);
    fr.trace.push_back(q);

    const double ll = observed_loglik(data, params);
    fr.loglik_trace.push_back(ll);
    fr.iterations = iter + 1;
    if (iter > 0 &&
        std::fabs(ll - prev_ll) <= config.tol * (std::fabs(prev_ll) + 1e-10)) {
      fr.converged = true;
      break;
    }
    prev_ll = ll;

    // M-step: closed-form mean first, then kernel parameters at fixed mean
    // (profiled variances), then the effect block.
    const MStepClosed closed = m_step_closed(data, post, params);
    params.mean = closed.mean;

    const Eigen::VectorXd r = data.w - params.mean_vector(data) - post.mean;
    const int groups = params.per_category() ? data.categories() : 1;
    for (int grp = 0; grp < groups; ++grp)
      optimize_kernel_block(data, params, grp, r, post, config,
                            &fr.max_jitter_used);

    // Residual variance at the new kernel parameters.
    for (int grp = 0; grp < groups; ++grp) {
      const int k_lo = params.per_category() ? grp : 0;
      const int k_hi = params.per_category() ? grp + 1 : data.categories();
      double quad = 0.0;
      int n_cov = 0;
      const NumericKernelParams kp = params.kernel(grp);
      for (int k = k_lo; k < k_hi; ++k) {
        const int off = data.category_offset(k);
        const int nk = data.category_sizes[k];
        const Eigen::MatrixXd Sa = posterior_block(post, off, nk);
        const Q1BlockStats st = q1_block_stats(
            data, k, r.segment(off, nk), &Sa, kp.lengthscale, kp.nugget,
            false);
        quad += st.quad;
        n_cov += nk;
      }
      params.resid_var[grp] = std::max(quad / n_cov, 1e-12);
    }

    if (effect) {
      optimize_angles(data, params, phi, post, config, &fr.max_jitter_used);
      const Q2Stats st = q2_stats(data, params.angles, phi, post, false);
      fr.max_jitter_used = std::max(fr.max_jitter_used, st.jitter);
      params.effect_var = std::max(st.quad / data.n(), 1e-12);
    }

    double q_after = q1_value(data, params, post);
    if (effect && params.effect_var > 0.0)
      q_after += q2_value(data, params, post);
    fr.trace_after_update.push_back(q_after);
  }

  fr.params = std::move(params);
  return fr;
}

}  // namespace

FitResult fit_em(const ComponentData& data, Variant variant,
                 const EmConfig& config) {
  if (data.n() < 2) throw input_error("need at least 2 observations");
  // A single category carries no cross-category structure: degrade to the
  // plain GP path.
  if (data.categories() <= 1 && variant != Variant::gp) variant = Variant::gp;
  if (variant == Variant::gp || variant == Variant::lmgp_s) {
    for (int k = 0; k < data.categories(); ++k)
      if (data.category_sizes[k] < 2)
        throw input_error("category " + std::to_string(k) +
                          " has fewer than 2 observations");
  }

  Rng rng(config.seed);
  FitResult best;
  double best_ll = -kInf;
  for (int start = 0; start < std::max(config.starts, 1); ++start) {
    LmgpParams init = initial_params(data, variant, config);
    if (start > 0) {
      // Multiplicative jitter on the kernel scales, fresh angles.
      for (Eigen::Index i = 0; i < init.lengthscale.size(); ++i)
        init.lengthscale(i) *= std::exp(1.5 * rng.uniform(-1.0, 1.0));
      if (!config.fixed_nugget)
        for (Eigen::Index i = 0; i < init.nugget.size(); ++i)
          init.nugget[i] = std::min(
              20.0, std::max(1e-8, init.nugget[i] *
                                       std::exp(2.0 * rng.uniform(-1.0, 1.0))));
      for (double& a : init.angles) a = M_PI * rng.uniform(0.25, 0.75);
    }
    FitResult fr = fit_em_single(data, std::move(init), config);
    const double ll = fr.loglik_trace.empty() ? -kInf : fr.loglik_trace.back();
    if (ll > best_ll) {
      best_ll = ll;
      best = std::move(fr);
    }
  }
  return best;
}

FitResult fit_em_per_category(const ComponentData& data,
                              const EmConfig& config) {
  return fit_em(data, Variant::lmgp_s, config);
}

ComponentPredictor make_predictor(const ComponentData& data,
                                  const LmgpParams& params) {
  ComponentPredictor pred;
  pred.X = data.X;
  pred.z = data.z;
  pred.params = params;
  if (params.has_effect() && !params.angles.empty())
    pred.P = hypersphere_corr(params.angles, data.categories()).P;
  else if (params.has_effect())
    pred.P = Eigen::MatrixXd::Ones(1, 1);

  Eigen::MatrixXd total = build_sigma_eps(data, params);
  if (params.has_effect() && params.effect_var > 0.0)
    total += params.effect_var * build_omega_alpha(data, params);
  SpdFactor fac = spd_factor(total);
  pred.weights = fac.solve(data.w - params.mean_vector(data));
  return pred;
}

double predict_score(const ComponentPredictor& pred,
                     const Eigen::VectorXd& x0, int z0) {
  const int n = static_cast<int>(pred.X.rows());
  const int c = pred.z.empty() ? 0 : pred.z.back() + 1;
  if (z0 < 0 || z0 >= c) throw input_error("category not in training set");
  if (x0.size() != pred.X.cols())
    throw input_error("prediction point dimension mismatch");

  const LmgpParams& prm = pred.params;
  const Eigen::VectorXd nu = prm.kernel(z0).lengthscale;
  const double s2_resid = prm.resid_var_of(z0);
  const bool effect = prm.has_effect() && prm.effect_var > 0.0;

  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double cross = 0.0;
    if (effect) {
      const double r = (x0 - pred.X.row(i).transpose()).norm();
      cross += prm.effect_var * pred.P(z0, pred.z[i]) *
               wendland(r, prm.support_radius, prm.support_exponent);
    }
    if (pred.z[i] == z0) {
      double dist = 0.0;
      for (Eigen::Index l = 0; l < x0.size(); ++l) {
        const double d = x0[l] - pred.X(i, l);
        dist += d * d / nu[l];
      }
      cross += s2_resid * std::exp(-dist);
    }
    acc += cross * pred.weights[i];
  }
  return prm.mean_of(z0) + acc;
}

double predict_w(const Eigen::VectorXd& x0, int z0, const ComponentData& data,
                 const LmgpParams& params) {
  return predict_score(make_predictor(data, params), x0, z0);
}

ModelPredictor::ModelPredictor(const FittedModel& model) : model_(&model) {
  comps_.reserve(model.components.size());
  for (int j = 0; j < model.dprime; ++j) {
    ComponentData data =
        ComponentData::make(model.W.col(j), model.X, model.z);
    comps_.push_back(make_predictor(data, model.components[j]));
  }
}

Eigen::VectorXd ModelPredictor::predict_scores(const Eigen::VectorXd& x0,
                                               int z0) const {
  Eigen::VectorXd scores(model_->dprime);
  for (int j = 0; j < model_->dprime; ++j)
    scores[j] = predict_score(comps_[j], x0, z0);
  return scores;
}

QuantileFit ModelPredictor::predict_fit(const Eigen::VectorXd& x0,
                                        int z0) const {
  return reconstruct_beta(predict_scores(x0, z0), model_->V, model_->dprime,
                          model_->truncate_intercept);
}

DistributionPrediction predict_distribution(const Eigen::VectorXd& x0, int z0,
                                            const FittedModel& model,
                                            const std::vector<double>& p_grid) {
  ModelPredictor pred(model);
  DistributionPrediction out;
  out.fit = pred.predict_fit(x0, z0);
  out.quantiles.reserve(p_grid.size());
  for (double p : p_grid)
    out.quantiles.push_back(eval_quantile(out.fit, model.basis, p));
  return out;
}

}  // namespace distpred
