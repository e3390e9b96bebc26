#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ekinfer/ensemble.hpp"
#include "ekinfer/models.hpp"
#include "ekinfer/parallel.hpp"
#include "ekinfer/report.hpp"
#include "ekinfer/rng.hpp"
#include "ekinfer/tempersmc.hpp"

namespace ekinfer {

// Two CW weight variants: the exact tempered-likelihood ratio (default), and
// an alternative whose log-det term is not scaled by h; constant
// per-particle terms drop out after normalization either way.
enum class CwWeightFormula { tempered_ratio, unscaled_logdet };

// Optional bounds-aware reparameterization for the EKI update: with `logit`
// the measurement update runs in unconstrained space, so bounded parameters
// can never leave their prior support.
enum class ParamTransform { none, logit };

struct EkiConfig {
  int N = 1000;
  double ess_target_fraction = 0.5;
  int M_noise = 1000;  // fixed MCMC sweeps for phi per iteration
  CwWeightFormula weight_formula = CwWeightFormula::tempered_ratio;
  ParamTransform transform = ParamTransform::none;
  std::uint64_t seed = 0;
};

// h = alpha - alpha_cum with alpha chosen by ESS bisection over the weight
// exponents base + (alpha - alpha_cum) * slope. With the default tempered
// ratio, base is zero and slope is the log-likelihood at h = 1.
inline double adapt_h(const Vector& base_logw, const Vector& slope_logw, double alpha_cum,
                      double target_ess) {
  if (!(alpha_cum >= 0.0 && alpha_cum < 1.0))
    throw std::invalid_argument("adapt_h: alpha_cum must be in [0,1)");
  double alpha = detail::bisect_alpha(base_logw, slope_logw, alpha_cum, target_ess);
  return alpha - alpha_cum;
}

inline double adapt_h(const Vector& logw_unit, double alpha_cum, double target_ess) {
  return adapt_h(Vector::Zero(logw_unit.size()), logw_unit, alpha_cum, target_ess);
}

// Normalized reweighting factors from pi_{alpha} to pi_{alpha + h}. gammas has
// either one entry (shared covariance) or one per particle.
inline Vector cw_increment_weights(const Ensemble& g_cache, const std::vector<Matrix>& gammas,
                                   const Vector& y, double h,
                                   CwWeightFormula formula = CwWeightFormula::tempered_ratio) {
  const int N = static_cast<int>(g_cache.cols());
  if (!(h > 0.0 && h <= 1.0)) throw std::invalid_argument("cw_increment_weights: h must be in (0,1]");
  if (gammas.size() != 1 && static_cast<int>(gammas.size()) != N)
    throw std::invalid_argument("cw_increment_weights: need 1 or N covariance matrices");
  Vector logw(N);
  for (int n = 0; n < N; ++n) {
    const Matrix& gamma = gammas.size() == 1 ? gammas[0] : gammas[n];
    if (formula == CwWeightFormula::tempered_ratio) {
      logw(n) = h * gaussian_loglik(y, g_cache.col(n), gamma);
    } else {
      Eigen::LLT<Matrix> llt(gamma);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("cw_increment_weights: covariance not positive definite");
      double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      Vector r = y - g_cache.col(n);
      logw(n) = -0.5 * logdet - 0.5 * h * r.dot(llt.solve(r));
    }
  }
  return normalize_log_weights(logw);
}

// One EKI measurement update with inflation 1/h: perturb observations as
// ytil^n ~ N(g^n, h^-1 Gamma^n), then move each particle by the sample-gain
// solve against its own Cyy(phi^n). A single shared covariance uses one solve
// for the whole ensemble.
inline Ensemble eki_measurement_update(const Ensemble& theta, const Ensemble& g_cache,
                                       const Vector& y, const std::vector<Matrix>& gammas,
                                       double h, std::uint64_t seed, int iteration) {
  const int N = static_cast<int>(theta.cols());
  const int dy = static_cast<int>(g_cache.rows());
  if (!(h > 0.0 && h <= 1.0))
    throw std::invalid_argument("eki_measurement_update: h must be in (0,1]");
  if (N < 2) throw std::invalid_argument("eki_measurement_update: need N >= 2");
  if (gammas.size() != 1 && static_cast<int>(gammas.size()) != N)
    throw std::invalid_argument("eki_measurement_update: need 1 or N covariance matrices");

  // Perturbed observations; sqrt factors reused when the covariance is shared.
  Ensemble ytil(dy, N);
  Matrix shared_sqrt;
  if (gammas.size() == 1) shared_sqrt = psd_sqrt(gammas[0] / h);
  parallel_for(N, [&](int n) {
    auto rng = make_stream(seed, static_cast<std::uint64_t>(iteration),
                           static_cast<std::uint64_t>(n), 1u);
    Vector z(dy);
    for (int i = 0; i < dy; ++i) z(i) = standard_normal(rng);
    if (gammas.size() == 1)
      ytil.col(n) = g_cache.col(n) + shared_sqrt * z;
    else
      ytil.col(n) = g_cache.col(n) + psd_sqrt(gammas[n] / h) * z;
  });

  Matrix c_tg = sample_cross_cov(theta, g_cache);
  Matrix s = sample_cov(g_cache);
  Ensemble out = theta;
  if (gammas.size() == 1) {
    Matrix cyy = s + gammas[0] / h;
    Matrix resid = (-ytil).colwise() + y;
    out += c_tg * solve_spd(cyy, resid);
  } else {
    parallel_for(N, [&](int n) {
      Matrix cyy = s + gammas[n] / h;
      Vector resid = y - ytil.col(n);
      out.col(n) += c_tg * solve_spd(cyy, resid);
    });
  }
  return out;
}

// Per-particle RW-MH on phi | theta^n targeting
// N(y | g^n, Gamma(theta^n, phi))^alpha p(phi). Uses only the cached model
// evaluations, so it costs zero G evaluations.
inline MutationStats noise_mcmc_update(const Ensemble& theta, Ensemble& phi,
                                       const Ensemble& g_cache, const Vector& y,
                                       const StaticModel& model, double alpha,
                                       const Matrix& proposal_cov, int sweeps,
                                       std::uint64_t seed, int iteration) {
  const int N = static_cast<int>(phi.cols());
  const int dp = static_cast<int>(phi.rows());
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("noise_mcmc_update: alpha must be in (0,1]");
  if (proposal_cov.rows() != dp || proposal_cov.cols() != dp)
    throw std::invalid_argument("noise_mcmc_update: proposal covariance dimension mismatch");
  if (sweeps <= 0) return {};

  Matrix prop_sqrt = psd_sqrt(proposal_cov);
  std::vector<long long> accepts(N, 0);
  parallel_for(N, [&](int n) {
    auto rng = make_stream(seed, static_cast<std::uint64_t>(iteration),
                           static_cast<std::uint64_t>(n), 3u);
    Vector p = phi.col(n);
    double lp = model.prior_phi.log_pdf(p);
    double ll = gaussian_loglik(y, g_cache.col(n), model.noise.gamma(theta.col(n), p));
    for (int m = 0; m < sweeps; ++m) {
      Vector z(dp);
      for (int i = 0; i < dp; ++i) z(i) = standard_normal(rng);
      Vector ps = p + prop_sqrt * z;
      double lp_s = model.prior_phi.log_pdf(ps);
      double u = uniform01(rng);
      if (std::isfinite(lp_s)) {
        double ll_s = gaussian_loglik(y, g_cache.col(n), model.noise.gamma(theta.col(n), ps));
        if (std::log(u) <= alpha * (ll_s - ll) + (lp_s - lp)) {
          p = ps;
          lp = lp_s;
          ll = ll_s;
          ++accepts[n];
        }
      }
    }
    phi.col(n) = p;
  });

  MutationStats stats;
  stats.proposals = static_cast<long long>(N) * sweeps;
  for (int n = 0; n < N; ++n) stats.accepts += accepts[n];
  return stats;
}

namespace detail {

struct BoundedTransform {
  Vector lower, upper;
  std::vector<bool> bounded;

  static BoundedTransform from_prior(const Prior& prior) {
    BoundedTransform t;
    int d = prior.dim();
    t.lower.resize(d);
    t.upper.resize(d);
    t.bounded.resize(d);
    for (int i = 0; i < d; ++i) {
      t.lower(i) = prior.lower(i);
      t.upper(i) = prior.upper(i);
      t.bounded[i] = std::isfinite(t.lower(i)) && std::isfinite(t.upper(i));
    }
    return t;
  }

  Vector forward(const Vector& x) const {
    Vector u = x;
    for (int i = 0; i < x.size(); ++i) {
      if (!bounded[i]) continue;
      double a = lower(i), b = upper(i);
      double eps = 1e-12 * (b - a);
      double v = std::min(std::max(x(i), a + eps), b - eps);
      u(i) = std::log((v - a) / (b - v));
    }
    return u;
  }

  Vector inverse(const Vector& u) const {
    Vector x = u;
    for (int i = 0; i < u.size(); ++i) {
      if (!bounded[i]) continue;
      double a = lower(i), b = upper(i);
      x(i) = a + (b - a) / (1.0 + std::exp(-u(i)));
    }
    return x;
  }
};

}  // namespace detail

// Component-wise IEKI: alternate an ESS-adapted EKI update of theta | phi
// with an exact MCMC update of phi | theta until the h schedule sums to 1.
// d_phi = 0 degrades to plain IEKI (no noise update).
inline RunReport cw_ieki_run(const StaticModel& model, const EkiConfig& cfg) {
  const int N = cfg.N;
  const int dt = model.prior_theta.dim();
  const int dp = model.noise.dim_phi;
  if (N < 2) throw std::invalid_argument("cw_ieki_run: need N >= 2");
  if (dp > 0 && cfg.M_noise < 1) throw std::invalid_argument("cw_ieki_run: need M_noise >= 1");

  const long long evals_before = model.forward.eval_count();
  const Vector& y = model.data;

  Ensemble theta(dt, N);
  Ensemble phi(std::max(dp, 0), N);
  Ensemble g_cache(model.forward.dim_y(), N);
  parallel_for(N, [&](int n) {
    auto rng = make_stream(cfg.seed, 0u, static_cast<std::uint64_t>(n));
    theta.col(n) = model.prior_theta.sample(rng);
    if (dp > 0) phi.col(n) = model.prior_phi.sample(rng);
    g_cache.col(n) = model.forward.evaluate(theta.col(n));
  });

  const double target = cfg.ess_target_fraction * N;
  const double initial_trace = sample_cov(theta).trace();
  auto transform = detail::BoundedTransform::from_prior(model.prior_theta);

  RunReport rep;
  rep.method = dp > 0 ? "cw-ieki" : "ieki";
  rep.seed = cfg.seed;

  double alpha_cum = 0.0;
  int j = 0;
  while (alpha_cum < 1.0) {
    ++j;
    // Covariances at (theta_{j-1}, phi_{j-1}); one shared matrix in the
    // known-Gamma case.
    std::vector<Matrix> gammas;
    if (dp == 0) {
      gammas.push_back(model.noise.gamma(theta.col(0), Vector(0)));
    } else {
      gammas.resize(N);
      parallel_for(N, [&](int n) { gammas[n] = model.noise.gamma(theta.col(n), phi.col(n)); });
    }

    Vector base = Vector::Zero(N), slope(N);
    if (cfg.weight_formula == CwWeightFormula::tempered_ratio) {
      for (int n = 0; n < N; ++n)
        slope(n) = gaussian_loglik(y, g_cache.col(n), gammas.size() == 1 ? gammas[0] : gammas[n]);
    } else {
      for (int n = 0; n < N; ++n) {
        const Matrix& gamma = gammas.size() == 1 ? gammas[0] : gammas[n];
        Eigen::LLT<Matrix> llt(gamma);
        double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        Vector r = y - g_cache.col(n);
        base(n) = -0.5 * logdet;
        slope(n) = -0.5 * r.dot(llt.solve(r));
      }
    }

    double alpha = detail::bisect_alpha(base, slope, alpha_cum, target);
    double h = std::max(alpha - alpha_cum, 1e-12);
    rep.ess.push_back(ess(normalize_log_weights(base + h * slope)));

    if (cfg.transform == ParamTransform::logit) {
      Ensemble u(dt, N);
      for (int n = 0; n < N; ++n) u.col(n) = transform.forward(theta.col(n));
      Ensemble u_new = eki_measurement_update(u, g_cache, y, gammas, h, cfg.seed, j);
      for (int n = 0; n < N; ++n) theta.col(n) = transform.inverse(u_new.col(n));
    } else {
      theta = eki_measurement_update(theta, g_cache, y, gammas, h, cfg.seed, j);
    }

    parallel_for(N, [&](int n) { g_cache.col(n) = model.forward.evaluate(theta.col(n)); });

    alpha_cum = alpha >= 1.0 ? 1.0 : alpha_cum + h;
    rep.h_schedule.push_back(h);
    rep.alphas.push_back(alpha_cum);

    if (dp > 0) {
      Matrix pcov = sample_cov(phi);
      Eigen::LLT<Matrix> probe(pcov);
      if (probe.info() != Eigen::Success || pcov.trace() <= 0.0)
        pcov += (1e-10 * std::max(pcov.trace(), 1e-300) / dp) * Matrix::Identity(dp, dp);
      auto stats = noise_mcmc_update(theta, phi, g_cache, y, model, alpha_cum, pcov, cfg.M_noise,
                                     cfg.seed, j);
      rep.acceptance.push_back(stats.rate());
      rep.repeats.push_back(cfg.M_noise);
    }

    if (alpha_cum < 1.0 && sample_cov(theta).trace() < 1e-14 * initial_trace)
      throw std::runtime_error(
          "cw_ieki_run: ensemble collapsed before reaching alpha = 1; "
          "consider a larger ESS target");
  }

  rep.samples.resize(dt + dp, N);
  rep.samples.topRows(dt) = theta;
  if (dp > 0) rep.samples.bottomRows(dp) = phi;
  rep.param_names = model.theta_names;
  rep.param_names.insert(rep.param_names.end(), model.phi_names.begin(), model.phi_names.end());
  rep.g_evals = model.forward.eval_count() - evals_before;          // (J + 1) N
  rep.g_evals_formula = static_cast<long long>(j) * N;              // the J N update count
  return rep;
}

}  // namespace ekinfer
