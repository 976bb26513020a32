#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "distpred/errors.hpp"
#include "distpred/lmgp.hpp"
#include "distpred/rng.hpp"

using namespace distpred;

namespace {

ComponentData toy_data(Rng& rng, int n, int p, int c) {
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < p; ++l) X(i, l) = rng.uniform(0.0, 2.0);
  std::vector<int> z(n);
  for (int k = 0; k < c; ++k) z[k] = k;
  for (int i = c; i < n; ++i)
    z[i] = static_cast<int>(rng.uniform_int(0, c - 1));
  std::sort(z.begin(), z.end());
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = rng.normal(0.5, 1.0);
  return ComponentData::make(std::move(w), std::move(X), std::move(z));
}

LmgpParams toy_params(Rng& rng, Variant variant, int p, int c) {
  LmgpParams prm;
  prm.variant = variant;
  const int groups = prm.per_category() ? c : 1;
  prm.mean = Eigen::VectorXd::Zero(groups);
  prm.resid_var = Eigen::VectorXd::Constant(groups, 0.8);
  prm.lengthscale.resize(p, groups);
  prm.nugget = Eigen::VectorXd::Constant(groups, 0.05);
  for (int grp = 0; grp < groups; ++grp) {
    prm.mean[grp] = rng.normal(0.3, 0.5);
    for (int l = 0; l < p; ++l)
      prm.lengthscale(l, grp) = rng.uniform(0.5, 2.0);
  }
  if (prm.has_effect()) {
    prm.effect_var = 0.6;
    prm.angles.resize(static_cast<std::size_t>(c) * (c - 1) / 2);
    for (double& a : prm.angles) a = rng.uniform(0.4, 2.7);
    prm.support_radius = variant == Variant::cgp
                             ? std::numeric_limits<double>::infinity()
                             : 2.0;
    prm.support_exponent = p / 2 + 1;
  }
  return prm;
}

// Maximizes a unimodal scalar function on [lo, hi] by golden section.
template <typename F>
double golden_max(F f, double lo, double hi, int iters = 200) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < iters && b - a > 1e-12 * (1.0 + std::fabs(a)); ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("e_step with zero effect variance returns a degenerate posterior") {
  Rng rng(3);
  ComponentData data = toy_data(rng, 6, 2, 2);
  LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 2);
  prm.effect_var = 0.0;
  const AlphaPosterior post = e_step(data, prm);
  CHECK(post.mean.norm() == 0.0);
  CHECK(post.cov.norm() == 0.0);
}

TEST_CASE("posterior mean always sums to zero") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    ComponentData data = toy_data(rng, 9, 2, 3);
    const LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 3);
    const AlphaPosterior post = e_step(data, prm);
    CHECK(std::fabs(post.mean.sum()) <=
          1e-8 * post.mean.cwiseAbs().sum() + 1e-12);
  }
}

TEST_CASE("e_step matches brute-force joint-normal conditioning") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    ComponentData data = toy_data(rng, 4, 2, 2);
    const LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 2);

    const Eigen::MatrixXd sig_a =
        prm.effect_var * build_omega_alpha(data, prm);
    const Eigen::MatrixXd sig_e = build_sigma_eps(data, prm);
    const Eigen::MatrixXd S_inv = (sig_a + sig_e).inverse();
    const Eigen::VectorXd resid = data.w - prm.mean_vector(data);
    const int n = data.n();
    const Eigen::MatrixXd C =
        Eigen::MatrixXd::Identity(n, n) -
        Eigen::MatrixXd::Constant(n, n, 1.0 / n);
    const Eigen::VectorXd mean_oracle = C * (sig_a * S_inv * resid);
    const Eigen::MatrixXd cov_oracle =
        C * (sig_a - sig_a * S_inv * sig_a) * C;

    const AlphaPosterior post = e_step(data, prm);
    CHECK((post.mean - mean_oracle).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((post.cov - cov_oracle).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("q1 with a degenerate posterior is the plain Gaussian loglik") {
  Rng rng(13);
  ComponentData data = toy_data(rng, 5, 1, 1);
  LmgpParams prm = toy_params(rng, Variant::gp, 1, 1);
  const AlphaPosterior zero{Eigen::VectorXd::Zero(5),
                            Eigen::MatrixXd::Zero(5, 5)};
  const double q1 = q1_value(data, prm, zero);
  // Independent evaluation of log N(w; mu, sigma2 * Omega).
  const Eigen::MatrixXd sigma = build_sigma_eps(data, prm);
  const Eigen::VectorXd r = data.w - prm.mean_vector(data);
  const double direct = -0.5 * 5 * std::log(2 * M_PI) -
                        0.5 * std::log(sigma.determinant()) -
                        0.5 * r.dot(sigma.inverse() * r);
  CHECK(q1 == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("q1 matches a Monte Carlo average over posterior draws") {
  Rng rng(17);
  ComponentData data = toy_data(rng, 3, 1, 1);
  LmgpParams prm = toy_params(rng, Variant::lmgp, 1, 1);
  const AlphaPosterior post = e_step(data, prm);

  const Eigen::MatrixXd sigma_e = build_sigma_eps(data, prm);
  const Eigen::MatrixXd sig_e_inv = sigma_e.inverse();
  const double logdet = std::log(sigma_e.determinant());
  const Eigen::VectorXd r0 = data.w - prm.mean_vector(data);

  // Draw from the (singular) posterior via its eigendecomposition.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(post.cov);
  Eigen::VectorXd sqrt_ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();

  const int draws = 1000000;
  double sum = 0.0, sumsq = 0.0;
  for (int d = 0; d < draws; ++d) {
    Eigen::VectorXd xi(3);
    for (int i = 0; i < 3; ++i) xi[i] = rng.normal();
    const Eigen::VectorXd alpha =
        post.mean + es.eigenvectors() * sqrt_ev.asDiagonal() * xi;
    const Eigen::VectorXd r = r0 - alpha;
    const double l1 = -0.5 * 3 * std::log(2 * M_PI) - 0.5 * logdet -
                      0.5 * r.dot(sig_e_inv * r);
    sum += l1;
    sumsq += l1 * l1;
  }
  const double mc = sum / draws;
  const double se =
      std::sqrt((sumsq / draws - mc * mc) / static_cast<double>(draws));
  CHECK(std::fabs(q1_value(data, prm, post) - mc) <= 3.0 * se);
}

TEST_CASE("q1 quadratic term scales quadratically in the residual") {
  Rng rng(19);
  ComponentData data = toy_data(rng, 6, 2, 1);
  LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 1);
  prm.mean[0] = 0.0;
  const AlphaPosterior zero{Eigen::VectorXd::Zero(6),
                            Eigen::MatrixXd::Zero(6, 6)};
  ComponentData data0 = data;
  data0.w.setZero();
  const double q_const = q1_value(data0, prm, zero);
  ComponentData data2 = data;
  data2.w *= 2.0;
  CHECK(q1_value(data2, prm, zero) - q_const ==
        doctest::Approx(4.0 * (q1_value(data, prm, zero) - q_const))
            .epsilon(1e-10));
}

TEST_CASE("m_step reduces to the iid MLE when the kernel is the identity") {
  Rng rng(23);
  const int n = 7;
  // Far-apart points with zero nugget: Omega_eps = I.
  Eigen::MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) X(i, 0) = 1000.0 * i;
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = rng.normal(2.0, 1.0);
  ComponentData data =
      ComponentData::make(w, X, std::vector<int>(n, 0));
  LmgpParams prm = toy_params(rng, Variant::lmgp, 1, 1);
  prm.nugget[0] = 0.0;
  prm.lengthscale(0, 0) = 1.0;
  const AlphaPosterior zero{Eigen::VectorXd::Zero(n),
                            Eigen::MatrixXd::Zero(n, n)};
  const MStepClosed upd = m_step_closed(data, zero, prm);
  CHECK(upd.mean[0] == doctest::Approx(w.mean()).epsilon(1e-12));
  const double mle =
      (w.array() - w.mean()).square().sum() / static_cast<double>(n);
  CHECK(upd.resid_var[0] == doctest::Approx(mle).epsilon(1e-12));
}

TEST_CASE("closed-form m_step matches 1-D numerical maximization") {
  Rng rng(29);
  ComponentData data = toy_data(rng, 5, 2, 2);
  LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 2);
  const AlphaPosterior post = e_step(data, prm);
  const MStepClosed upd = m_step_closed(data, post, prm);

  // Mean: maximize Q1 over mu with everything else fixed.
  auto q1_of_mu = [&](double mu) {
    LmgpParams p2 = prm;
    p2.mean[0] = mu;
    return q1_value(data, p2, post);
  };
  const double mu_star = golden_max(q1_of_mu, upd.mean[0] - 3.0,
                                    upd.mean[0] + 3.0);
  CHECK(std::fabs(mu_star - upd.mean[0]) <= 1e-6);

  // Residual variance: maximize Q1 over sigma2_eps at the updated mean.
  auto q1_of_var = [&](double v) {
    LmgpParams p2 = prm;
    p2.mean = upd.mean;
    p2.resid_var[0] = v;
    return q1_value(data, p2, post);
  };
  const double v_star =
      golden_max(q1_of_var, 0.05 * upd.resid_var[0], 20.0 * upd.resid_var[0]);
  CHECK(std::fabs(v_star - upd.resid_var[0]) <=
        1e-6 * std::max(1.0, upd.resid_var[0]));

  // Effect variance: maximize Q2 over sigma2_alpha.
  auto q2_of_var = [&](double v) {
    LmgpParams p2 = prm;
    p2.effect_var = v;
    return q2_value(data, p2, post);
  };
  const double a_star =
      golden_max(q2_of_var, 0.05 * upd.effect_var, 20.0 * upd.effect_var);
  CHECK(std::fabs(a_star - upd.effect_var) <=
        1e-6 * std::max(1.0, upd.effect_var));
}

TEST_CASE("unit posterior with identity effect correlation gives unit var") {
  Rng rng(31);
  const int n = 6;
  Eigen::MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) X(i, 0) = 100.0 * i;  // beyond any taper range
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  std::vector<int> z(n, 0);
  for (int i = n / 2; i < n; ++i) z[i] = 1;
  ComponentData data = ComponentData::make(w, X, z);
  LmgpParams prm = toy_params(rng, Variant::lmgp, 1, 2);
  prm.support_radius = 1.0;  // all pairs farther than the taper range
  const AlphaPosterior post{Eigen::VectorXd::Zero(n),
                            Eigen::MatrixXd::Identity(n, n)};
  const MStepClosed upd = m_step_closed(data, post, prm);
  CHECK(upd.effect_var == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("profile gradients match central finite differences") {
  Rng rng(37);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 6 + trial, p = 1 + trial % 3, c = 1 + trial % 3;
    ComponentData data = toy_data(rng, n, p, c);
    LmgpParams prm = toy_params(rng, Variant::lmgp, p, c);
    const AlphaPosterior post = e_step(data, prm);
    const ProfileGradients pg = profile_gradients(data, prm, post);

    // (nu, g) coordinates, mean held fixed.
    for (int coord = 0; coord <= p; ++coord) {
      const double base =
          coord < p ? prm.lengthscale(coord, 0) : prm.nugget[0];
      const double h = 1e-5 * std::max(1.0, std::fabs(base));
      LmgpParams up = prm, dn = prm;
      if (coord < p) {
        up.lengthscale(coord, 0) += h;
        dn.lengthscale(coord, 0) -= h;
      } else {
        up.nugget[0] += h;
        dn.nugget[0] -= h;
      }
      const double fd = (profile_gradients(data, up, post).q1_profile -
                         profile_gradients(data, dn, post).q1_profile) /
                        (2 * h);
      const double an = pg.kernel[coord];
      CHECK(std::fabs(fd - an) /
                std::max({1.0, std::fabs(fd), std::fabs(an)}) <=
            1e-4);
    }

    // Hypersphere angles.
    for (std::size_t t = 0; t < prm.angles.size(); ++t) {
      const double h = 1e-5;
      LmgpParams up = prm, dn = prm;
      up.angles[t] += h;
      dn.angles[t] -= h;
      const double fd = (profile_gradients(data, up, post).q2_profile -
                         profile_gradients(data, dn, post).q2_profile) /
                        (2 * h);
      const double an = pg.angles[static_cast<Eigen::Index>(t)];
      CHECK(std::fabs(fd - an) /
                std::max({1.0, std::fabs(fd), std::fabs(an)}) <=
            1e-4);
    }
  }
}

TEST_CASE("gradient of logdet w.r.t. the nugget is the inverse trace") {
  Rng rng(41);
  ComponentData data = toy_data(rng, 7, 2, 2);
  LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 2);
  const double h = 1e-6;
  LmgpParams up = prm, dn = prm;
  up.nugget[0] += h;
  dn.nugget[0] -= h;
  const double fd =
      (std::log(build_omega_eps(data, up).determinant()) -
       std::log(build_omega_eps(data, dn).determinant())) /
      (2 * h);
  const double trace = build_omega_eps(data, prm).inverse().trace();
  CHECK(fd == doctest::Approx(trace).epsilon(1e-5));
}

TEST_CASE("swap-symmetric designs give equal lengthscale gradients") {
  Rng rng(43);
  const int half = 4;
  Eigen::MatrixXd X(2 * half, 2);
  Eigen::VectorXd w(2 * half);
  for (int i = 0; i < half; ++i) {
    const double a = rng.uniform(0.0, 2.0), b = rng.uniform(0.0, 2.0);
    const double v = rng.normal();
    X(2 * i, 0) = a;
    X(2 * i, 1) = b;
    X(2 * i + 1, 0) = b;
    X(2 * i + 1, 1) = a;
    w[2 * i] = v;
    w[2 * i + 1] = v;
  }
  ComponentData data =
      ComponentData::make(w, X, std::vector<int>(2 * half, 0));
  LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 1);
  prm.lengthscale(0, 0) = prm.lengthscale(1, 0) = 1.3;
  prm.effect_var = 0.0;  // degenerate posterior keeps the symmetry exact
  prm.mean[0] = 0.1;
  const AlphaPosterior post = e_step(data, prm);
  const ProfileGradients pg = profile_gradients(data, prm, post);
  CHECK(pg.kernel[0] == doctest::Approx(pg.kernel[1]).epsilon(1e-10));
}

namespace {

// Draws one score vector from the generating model.
Eigen::VectorXd draw_from_model(Rng& rng, const ComponentData& shape,
                                const LmgpParams& prm) {
  Eigen::MatrixXd total = build_sigma_eps(shape, prm);
  if (prm.has_effect() && prm.effect_var > 0.0)
    total += prm.effect_var * build_omega_alpha(shape, prm);
  const Eigen::LLT<Eigen::MatrixXd> llt(total);
  Eigen::VectorXd xi(shape.n());
  for (int i = 0; i < shape.n(); ++i) xi[i] = rng.normal();
  return prm.mean_vector(shape) + Eigen::MatrixXd(llt.matrixL()) * xi;
}

ComponentData lattice_data(int per_cat, int c, Eigen::VectorXd w) {
  const int side = static_cast<int>(std::ceil(std::sqrt(per_cat)));
  Eigen::MatrixXd X(per_cat * c, 2);
  std::vector<int> z;
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < per_cat; ++i) {
      X(k * per_cat + i, 0) = (i % side) / std::max(1.0, side - 1.0);
      X(k * per_cat + i, 1) = (i / side) / std::max(1.0, side - 1.0);
      z.push_back(k);
    }
  return ComponentData::make(std::move(w), std::move(X), std::move(z));
}

// 4x4 lattice plus four near-duplicate twins per category: the twins
// identify the nugget, the lattice identifies the lengthscales.
ComponentData twin_lattice(int c, Eigen::VectorXd w) {
  const int per_cat = 20;
  Eigen::MatrixXd X(per_cat * c, 2);
  std::vector<int> z;
  for (int k = 0; k < c; ++k) {
    const int row = k * per_cat;
    for (int i = 0; i < 16; ++i) {
      X(row + i, 0) = (i % 4) / 3.0;
      X(row + i, 1) = (i / 4) / 3.0;
    }
    for (int t = 0; t < 4; ++t) {
      X(row + 16 + t, 0) = X(row + 5 * t, 0) + 0.01;
      X(row + 16 + t, 1) = X(row + 5 * t, 1) + 0.005;
    }
    for (int i = 0; i < per_cat; ++i) z.push_back(k);
  }
  return ComponentData::make(std::move(w), std::move(X), std::move(z));
}

}  // namespace

TEST_CASE("EM recovers a self-generated model and ascends") {
  Rng rng(47);
  const int c = 3;
  ComponentData shape = twin_lattice(c, Eigen::VectorXd::Zero(20 * c));

  // Strong cross-category correlation pins the effect variance, keeping the
  // two variance components identifiable at this sample size.
  LmgpParams truth = toy_params(rng, Variant::lmgp, 2, c);
  truth.mean[0] = 1.5;
  truth.resid_var[0] = 0.04;
  truth.effect_var = 0.08;
  truth.nugget[0] = 0.05;
  truth.lengthscale(0, 0) = 0.15;
  truth.lengthscale(1, 0) = 0.2;
  truth.support_radius = 1.2;
  truth.angles = {0.4, 0.6, 0.5};

  ComponentData data = shape;
  Rng noise(47);
  data.w = draw_from_model(noise, shape, truth);

  EmConfig config;
  config.max_iter = 120;
  config.tol = 1e-7;
  config.support_radius = truth.support_radius;
  const FitResult fit = fit_em(data, Variant::lmgp, config);

  CHECK(fit.params.resid_var[0] >= truth.resid_var[0] / 2.0);
  CHECK(fit.params.resid_var[0] <= truth.resid_var[0] * 2.0);

  // EM ascent: every M-step raises Q1+Q2 at its own posterior, and the
  // observed-data log-likelihood never decreases.
  REQUIRE(fit.trace_after_update.size() <= fit.trace.size());
  for (std::size_t t = 0; t < fit.trace_after_update.size(); ++t)
    CHECK(fit.trace_after_update[t] >= fit.trace[t] - 1e-8);
  for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t)
    CHECK(fit.loglik_trace[t] >= fit.loglik_trace[t - 1] - 1e-8);

  // Predictions near the generating model's own conditional means: probe
  // just off the training lattice, where both models are data-dominated.
  Eigen::VectorXd x0(2);
  for (int trial = 0; trial < 6; ++trial) {
    const int i = 3 + 2 * trial;
    x0 = data.X.row(i).transpose();
    x0[0] += 0.02;
    x0[1] -= 0.02;
    const int z0 = trial % c;
    const double p_fit = predict_w(x0, z0, data, fit.params);
    const double p_true = predict_w(x0, z0, data, truth);
    CHECK(std::fabs(p_fit - p_true) <= 1e-2);
  }
}

TEST_CASE("single category degrades to the plain GP fit") {
  Rng rng(53);
  ComponentData data = toy_data(rng, 14, 2, 1);
  EmConfig config;
  config.max_iter = 40;
  const FitResult as_lmgp = fit_em(data, Variant::lmgp, config);
  const FitResult as_gp = fit_em(data, Variant::gp, config);
  CHECK(as_lmgp.params.variant == Variant::gp);
  Eigen::VectorXd x0(2);
  for (int trial = 0; trial < 5; ++trial) {
    x0 << rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0);
    CHECK(std::fabs(predict_w(x0, 0, data, as_lmgp.params) -
                    predict_w(x0, 0, data, as_gp.params)) <= 1e-6);
  }
}

TEST_CASE("identical categories give identical per-category estimates") {
  Rng rng(59);
  const int half = 10;
  Eigen::MatrixXd Xk(half, 2);
  Eigen::VectorXd wk(half);
  for (int i = 0; i < half; ++i) {
    Xk(i, 0) = rng.uniform(0.0, 1.0);
    Xk(i, 1) = rng.uniform(0.0, 1.0);
    wk[i] = rng.normal(1.0, 0.7);
  }
  Eigen::MatrixXd X(2 * half, 2);
  X << Xk, Xk;
  Eigen::VectorXd w(2 * half);
  w << wk, wk;
  std::vector<int> z(2 * half, 0);
  for (int i = half; i < 2 * half; ++i) z[i] = 1;
  ComponentData data = ComponentData::make(w, X, z);

  EmConfig config;
  config.max_iter = 30;
  config.tol = 1e-8;
  const FitResult per_cat = fit_em_per_category(data, config);
  CHECK(std::fabs(per_cat.params.mean[0] - per_cat.params.mean[1]) <= 1e-4);
  CHECK(std::fabs(per_cat.params.resid_var[0] -
                  per_cat.params.resid_var[1]) <= 1e-4);
  CHECK((per_cat.params.lengthscale.col(0) -
         per_cat.params.lengthscale.col(1))
            .cwiseAbs()
            .maxCoeff() <= 1e-4);

  const FitResult shared = fit_em(data, Variant::lmgp, config);
  CHECK(std::fabs(per_cat.params.mean[0] - shared.params.mean[0]) <= 1e-4);
  CHECK(std::fabs(per_cat.params.resid_var[0] - shared.params.resid_var[0]) <=
        1e-4 * std::max(1.0, shared.params.resid_var[0]));
}

TEST_CASE("per-category variances follow the generating ratio") {
  Rng rng(61);
  const int per_cat = 18;
  ComponentData shape =
      lattice_data(per_cat, 2, Eigen::VectorXd::Zero(2 * per_cat));
  LmgpParams truth = toy_params(rng, Variant::lmgp_s, 2, 2);
  truth.effect_var = 0.0;
  truth.resid_var[0] = 1.0;
  truth.resid_var[1] = 0.01;
  truth.nugget.setConstant(0.05);
  ComponentData data = shape;
  data.w = draw_from_model(rng, shape, truth);

  EmConfig config;
  config.max_iter = 40;
  const FitResult fit = fit_em_per_category(data, config);
  CHECK(fit.params.resid_var[0] / fit.params.resid_var[1] > 10.0);
}

TEST_CASE("per-category Q1 blocks add up to the full Q1") {
  Rng rng(67);
  ComponentData data = toy_data(rng, 12, 2, 3);
  const LmgpParams prm = toy_params(rng, Variant::lmgp_s, 2, 3);
  const AlphaPosterior post = e_step(data, prm);
  const double full = q1_value(data, prm, post);

  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    const int off = data.category_offset(k);
    const int nk = data.category_sizes[k];
    ComponentData slice = ComponentData::make(
        data.w.segment(off, nk), data.X.middleRows(off, nk),
        std::vector<int>(nk, 0));
    LmgpParams pk = prm;
    pk.variant = Variant::lmgp_s;
    pk.mean = prm.mean.segment(k, 1);
    pk.resid_var = prm.resid_var.segment(k, 1);
    pk.lengthscale = prm.lengthscale.col(k);
    pk.nugget = prm.nugget.segment(k, 1);
    const AlphaPosterior post_k{post.mean.segment(off, nk),
                                post.cov.block(off, off, nk, nk)};
    sum += q1_value(slice, pk, post_k);
  }
  CHECK(full == doctest::Approx(sum).epsilon(1e-10));
}

TEST_CASE("zero-nugget single-category prediction interpolates") {
  Rng rng(71);
  const int n = 8;
  Eigen::MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) X(i, 0) = i * 0.7;
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = rng.normal();
  ComponentData data = ComponentData::make(w, X, std::vector<int>(n, 0));
  LmgpParams prm = toy_params(rng, Variant::gp, 1, 1);
  prm.nugget[0] = 0.0;
  prm.lengthscale(0, 0) = 0.5;
  for (int i = 0; i < n; ++i) {
    const double pred = predict_w(X.row(i).transpose(), 0, data, prm);
    CHECK(std::fabs(pred - w[i]) <= 1e-8);
  }
  // Far from the data every kernel vanishes: revert to the prior mean.
  Eigen::VectorXd far(1);
  far << 1e6;
  CHECK(predict_w(far, 0, data, prm) ==
        doctest::Approx(prm.mean[0]).epsilon(1e-12));
}

TEST_CASE("prediction matches brute-force joint-normal conditioning") {
  Rng rng(73);
  for (int trial = 0; trial < 4; ++trial) {
    ComponentData data = toy_data(rng, 5, 2, 2);
    const LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 2);
    Eigen::VectorXd x0(2);
    x0 << rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0);
    const int z0 = static_cast<int>(rng.uniform_int(0, 1));

    // Entry-by-entry assembly straight from the kernel definitions.
    const int n = data.n();
    Eigen::VectorXd cross(n);
    for (int i = 0; i < n; ++i) {
      const double r = (x0 - data.X.row(i).transpose()).norm();
      double taper = 0.0;
      if (r <= prm.support_radius)
        taper = std::pow(1.0 - r / prm.support_radius,
                         prm.support_exponent);
      const Eigen::MatrixXd P = hypersphere_corr(prm.angles, 2).P;
      cross[i] = prm.effect_var * P(z0, data.z[i]) * taper;
      if (data.z[i] == z0) {
        double dist = 0.0;
        for (int l = 0; l < 2; ++l) {
          const double d = x0[l] - data.X(i, l);
          dist += d * d / prm.lengthscale(l, 0);
        }
        cross[i] += prm.resid_var[0] * std::exp(-dist);
      }
    }
    const Eigen::MatrixXd total =
        prm.effect_var * build_omega_alpha(data, prm) +
        build_sigma_eps(data, prm);
    const double oracle =
        prm.mean[0] +
        cross.dot(total.inverse() * (data.w - prm.mean_vector(data)));
    CHECK(std::fabs(predict_w(x0, z0, data, prm) - oracle) <= 1e-10);
  }
}

TEST_CASE("zero effect variance collapses to the plain GP prediction") {
  Rng rng(79);
  ComponentData data = toy_data(rng, 8, 2, 2);
  LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 2);
  prm.effect_var = 0.0;
  Eigen::VectorXd x0(2);
  x0 << 0.9, 1.1;
  const int z0 = 1;

  // Plain GP on the z0 category only, straight from the formulas.
  const int off = data.category_offset(z0);
  const int nk = data.category_sizes[z0];
  Eigen::MatrixXd omega(nk, nk);
  Eigen::VectorXd cross(nk);
  for (int i = 0; i < nk; ++i) {
    for (int j = 0; j < nk; ++j) {
      double dist = 0.0;
      for (int l = 0; l < 2; ++l) {
        const double d = data.X(off + i, l) - data.X(off + j, l);
        dist += d * d / prm.lengthscale(l, 0);
      }
      omega(i, j) = std::exp(-dist) + (i == j ? prm.nugget[0] : 0.0);
    }
    double dist0 = 0.0;
    for (int l = 0; l < 2; ++l) {
      const double d = x0[l] - data.X(off + i, l);
      dist0 += d * d / prm.lengthscale(l, 0);
    }
    cross[i] = std::exp(-dist0);
  }
  const Eigen::VectorXd wk = data.w.segment(off, nk);
  const double gp = prm.mean[0] +
                    cross.dot(omega.inverse() *
                              (wk.array() - prm.mean[0]).matrix());
  CHECK(std::fabs(predict_w(x0, z0, data, prm) - gp) <= 1e-10);
}

TEST_CASE("infinite taper range reproduces the no-threshold variant") {
  Rng rng(83);
  ComponentData data = toy_data(rng, 9, 2, 3);
  LmgpParams lmgp = toy_params(rng, Variant::lmgp, 2, 3);
  lmgp.support_radius = std::numeric_limits<double>::infinity();
  LmgpParams cgp = lmgp;
  cgp.variant = Variant::cgp;
  Eigen::VectorXd x0(2);
  for (int trial = 0; trial < 5; ++trial) {
    x0 << rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0);
    const int z0 = static_cast<int>(rng.uniform_int(0, 2));
    CHECK(std::fabs(predict_w(x0, z0, data, lmgp) -
                    predict_w(x0, z0, data, cgp)) <= 1e-10);
  }
}

TEST_CASE("prediction is linear in the scores at fixed parameters") {
  Rng rng(89);
  ComponentData data = toy_data(rng, 7, 2, 2);
  LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 2);
  prm.mean.setZero();
  ComponentData d1 = data, d2 = data, mix = data;
  for (int i = 0; i < 7; ++i) {
    d1.w[i] = rng.normal();
    d2.w[i] = rng.normal();
  }
  const double a = 1.7, b = -0.4;
  mix.w = a * d1.w + b * d2.w;
  Eigen::VectorXd x0(2);
  x0 << 0.8, 0.3;
  const double lhs = predict_w(x0, 0, mix, prm);
  const double rhs =
      a * predict_w(x0, 0, d1, prm) + b * predict_w(x0, 0, d2, prm);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("swapping identical categories leaves predictions unchanged") {
  Rng rng(97);
  const int half = 6;
  Eigen::MatrixXd Xk(half, 2);
  Eigen::VectorXd wa(half), wb(half);
  for (int i = 0; i < half; ++i) {
    Xk(i, 0) = rng.uniform(0.0, 1.0);
    Xk(i, 1) = rng.uniform(0.0, 1.0);
    wa[i] = rng.normal();
    wb[i] = rng.normal();
  }
  std::vector<int> z(2 * half, 0);
  for (int i = half; i < 2 * half; ++i) z[i] = 1;

  Eigen::MatrixXd X(2 * half, 2);
  X << Xk, Xk;
  Eigen::VectorXd w_ab(2 * half), w_ba(2 * half);
  w_ab << wa, wb;
  w_ba << wb, wa;
  ComponentData data_ab = ComponentData::make(w_ab, X, z);
  ComponentData data_ba = ComponentData::make(w_ba, X, z);
  const LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 2);

  Eigen::VectorXd x0(2);
  for (int trial = 0; trial < 5; ++trial) {
    x0 << rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0);
    // Category 0 of (a,b) is category 1 of (b,a); a 2x2 hypersphere
    // correlation is symmetric so the parameters need no adjustment.
    CHECK(std::fabs(predict_w(x0, 0, data_ab, prm) -
                    predict_w(x0, 1, data_ba, prm)) <= 1e-8);
  }
}

TEST_CASE("prediction rejects unseen categories and dimension mismatch") {
  Rng rng(101);
  ComponentData data = toy_data(rng, 6, 2, 2);
  const LmgpParams prm = toy_params(rng, Variant::lmgp, 2, 2);
  Eigen::VectorXd x0(2);
  x0 << 0.5, 0.5;
  CHECK_THROWS_AS(predict_w(x0, 2, data, prm), input_error);
  CHECK_THROWS_AS(predict_w(x0, -1, data, prm), input_error);
  Eigen::VectorXd bad(3);
  bad << 1, 2, 3;
  CHECK_THROWS_AS(predict_w(bad, 0, data, prm), input_error);
}

TEST_CASE("fit_em enforces minimum category sizes for per-category fits") {
  Rng rng(103);
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 1.0, 2.0;
  Eigen::VectorXd w(3);
  w << 1.0, 2.0, 3.0;
  // Category 1 has a single observation.
  ComponentData data = ComponentData::make(w, X, {0, 0, 1});
  CHECK_THROWS_WITH_AS(static_cast<void>(fit_em(data, Variant::gp, {})),
                       doctest::Contains("category 1"), input_error);
}
