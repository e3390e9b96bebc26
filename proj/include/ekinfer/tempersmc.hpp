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

namespace ekinfer {

enum class ProposalScaleRule { unit, optimal_238 };

struct SmcConfig {
  int N = 1000;
  double ess_target_fraction = 0.5;
  double c = 0.01;     // target acceptance rate is 1 - c
  int S1 = 5;          // pilot MCMC repeats
  int M_max = 500;
  ProposalScaleRule proposal_scale_rule = ProposalScaleRule::optimal_238;
  ResampleScheme resample_scheme = ResampleScheme::systematic;
  std::uint64_t seed = 0;
};

// Particles over (theta, phi) jointly with cached log-likelihoods and
// log-priors, at temperature alpha.
struct TemperState {
  Ensemble particles;  // (d_theta + d_phi) x N
  Vector loglik;
  Vector logprior;
  double alpha = 0.0;
  int j = 0;
};

namespace detail {

// Largest alpha in (alpha_prev, 1] whose reweighting exponent
// exp(base + (alpha - alpha_prev) * slope) keeps ESS >= target, by bisection.
// The base term is zero everywhere except the unscaled-logdet CW weight variant.
inline double bisect_alpha(const Vector& base, const Vector& slope, double alpha_prev,
                           double target_ess) {
  auto ess_at = [&](double a) {
    Vector w = normalize_log_weights(base + (a - alpha_prev) * slope);
    return ess(w);
  };
  if (ess_at(1.0) >= target_ess) return 1.0;
  double lo = alpha_prev, hi = 1.0;
  for (int it = 0; it < 100 && hi - lo > 1e-8; ++it) {
    double mid = 0.5 * (lo + hi);
    if (ess_at(mid) >= target_ess)
      lo = mid;
    else
      hi = mid;
  }
  // Guard against a crossing within tolerance of alpha_prev: the schedule
  // must stay strictly increasing.
  return lo > alpha_prev ? lo : hi;
}

}  // namespace detail

inline double adapt_alpha(const Vector& loglik, double alpha_prev, double target_ess) {
  const int n = static_cast<int>(loglik.size());
  if (!(alpha_prev >= 0.0 && alpha_prev < 1.0))
    throw std::invalid_argument("adapt_alpha: alpha_prev must be in [0,1)");
  if (!(target_ess > 1.0 && target_ess <= n))
    throw std::invalid_argument("adapt_alpha: target_ess must be in (1, N]");
  return detail::bisect_alpha(Vector::Zero(n), loglik, alpha_prev, target_ess);
}

// M_j = ceil(log c / log(1-p)), clamped to [m_min, m_max]. p = 0 diverges and
// maps to m_max; p = 1 maps to 1 before the clamp.
inline int adapt_repeats(double p_hat, double c, int m_min = 5, int m_max = 500) {
  if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("adapt_repeats: c must be in (0,1)");
  if (!(p_hat >= 0.0 && p_hat <= 1.0))
    throw std::invalid_argument("adapt_repeats: p_hat must be in [0,1]");
  int m;
  if (p_hat <= 0.0)
    m = m_max;
  else if (p_hat >= 1.0)
    m = 1;
  else
    m = static_cast<int>(std::ceil(std::log(c) / std::log(1.0 - p_hat)));
  return std::min(std::max(m, m_min), m_max);
}

struct MutationStats {
  long long proposals = 0;
  long long accepts = 0;
  double rate() const { return proposals == 0 ? 0.0 : static_cast<double>(accepts) / proposals; }
};

// `repeats` RW-MH steps per particle targeting pi_alpha(theta, phi) with a
// symmetric Gaussian proposal. Every proposal evaluates G once, which keeps
// the evaluation counter equal to N + (number of proposals).
inline MutationStats mh_mutate(TemperState& state, const StaticModel& model, int repeats,
                               const Matrix& proposal_cov, std::uint64_t seed,
                               std::uint64_t stage) {
  const int N = static_cast<int>(state.particles.cols());
  const int dt = model.prior_theta.dim();
  const int dp = model.noise.dim_phi;
  const int d = dt + dp;
  if (proposal_cov.rows() != d || proposal_cov.cols() != d)
    throw std::invalid_argument("mh_mutate: proposal covariance dimension mismatch");
  if (repeats <= 0) return {};

  Matrix prop_sqrt = psd_sqrt(proposal_cov);
  std::vector<long long> accepts(N, 0);
  parallel_for(N, [&](int n) {
    auto rng = make_stream(seed, static_cast<std::uint64_t>(state.j), static_cast<std::uint64_t>(n),
                           stage);
    Vector x = state.particles.col(n);
    double ll = state.loglik(n);
    double lp = state.logprior(n);
    for (int m = 0; m < repeats; ++m) {
      Vector z(d);
      for (int i = 0; i < d; ++i) z(i) = standard_normal(rng);
      Vector xs = x + prop_sqrt * z;
      Vector theta_s = xs.head(dt);
      Vector phi_s = xs.tail(dp);
      Vector g = model.forward.evaluate(theta_s);
      double lp_s = model.prior_theta.log_pdf(theta_s);
      if (dp > 0 && std::isfinite(lp_s)) lp_s += model.prior_phi.log_pdf(phi_s);
      double u = uniform01(rng);
      if (std::isfinite(lp_s)) {
        double ll_s = gaussian_loglik(model.data, g, model.noise.gamma(theta_s, phi_s));
        double log_ratio = state.alpha * (ll_s - ll) + (lp_s - lp);
        if (std::log(u) <= log_ratio) {
          x = xs;
          ll = ll_s;
          lp = lp_s;
          ++accepts[n];
        }
      }
    }
    state.particles.col(n) = x;
    state.loglik(n) = ll;
    state.logprior(n) = lp;
  });

  MutationStats stats;
  stats.proposals = static_cast<long long>(N) * repeats;
  for (int n = 0; n < N; ++n) stats.accepts += accepts[n];
  return stats;
}

// Adaptive likelihood-tempering SMC on the static model: reweight to the
// ESS-adapted temperature, resample, mutate with adaptive MCMC repeats.
inline RunReport smc_run(const StaticModel& model, const SmcConfig& cfg) {
  const int N = cfg.N;
  const int dt = model.prior_theta.dim();
  const int dp = model.noise.dim_phi;
  const int d = dt + dp;
  if (N < 2) throw std::invalid_argument("smc_run: need N >= 2");
  if (!(cfg.ess_target_fraction > 0.0 && cfg.ess_target_fraction < 1.0))
    throw std::invalid_argument("smc_run: ess_target_fraction must be in (0,1)");

  const long long evals_before = model.forward.eval_count();

  TemperState st;
  st.particles.resize(d, N);
  st.loglik.resize(N);
  st.logprior.resize(N);
  parallel_for(N, [&](int n) {
    auto rng = make_stream(cfg.seed, 0u, static_cast<std::uint64_t>(n));
    Vector theta = model.prior_theta.sample(rng);
    Vector phi = dp > 0 ? model.prior_phi.sample(rng) : Vector(0);
    st.particles.col(n).head(dt) = theta;
    if (dp > 0) st.particles.col(n).tail(dp) = phi;
    Vector g = model.forward.evaluate(theta);
    st.loglik(n) = gaussian_loglik(model.data, g, model.noise.gamma(theta, phi));
    st.logprior(n) = model.prior_theta.log_pdf(theta) + (dp > 0 ? model.prior_phi.log_pdf(phi) : 0.0);
  });

  const double target = cfg.ess_target_fraction * N;
  const double scale = cfg.proposal_scale_rule == ProposalScaleRule::optimal_238
                           ? 2.38 * 2.38 / static_cast<double>(d)
                           : 1.0;

  RunReport rep;
  rep.method = "smc";
  rep.seed = cfg.seed;
  int S = cfg.S1;
  long long sum_m = 0;

  while (st.alpha < 1.0) {
    int j = st.j + 1;
    double alpha_new = adapt_alpha(st.loglik, st.alpha, target);
    Vector w;
    try {
      w = normalize_log_weights((alpha_new - st.alpha) * st.loglik);
    } catch (const std::runtime_error&) {
      throw std::runtime_error("smc_run: particle degeneracy at iteration " + std::to_string(j));
    }
    double e = ess(w);

    auto rng_rs = make_stream(cfg.seed, static_cast<std::uint64_t>(j), 0xe5a17ULL);
    auto idx = resample_indices(w, rng_rs, cfg.resample_scheme);
    Ensemble parts(d, N);
    Vector ll(N), lp(N);
    for (int n = 0; n < N; ++n) {
      parts.col(n) = st.particles.col(idx[n]);
      ll(n) = st.loglik(idx[n]);
      lp(n) = st.logprior(idx[n]);
    }
    st.particles = std::move(parts);
    st.loglik = std::move(ll);
    st.logprior = std::move(lp);
    st.alpha = alpha_new;
    st.j = j;

    Matrix pcov = scale * sample_cov(st.particles);
    Eigen::LLT<Matrix> probe(pcov);
    if (probe.info() != Eigen::Success || pcov.trace() <= 0.0)
      pcov += (1e-10 * std::max(pcov.trace(), 1e-300) / d) * Matrix::Identity(d, d);

    auto pilot = mh_mutate(st, model, S, pcov, cfg.seed, 2u);
    int M = adapt_repeats(pilot.rate(), cfg.c, cfg.S1, cfg.M_max);
    int remaining = std::max(0, M - S);
    auto rest = mh_mutate(st, model, remaining, pcov, cfg.seed, 3u);
    int Mj = S + remaining;

    rep.alphas.push_back(st.alpha);
    rep.ess.push_back(e);
    rep.repeats.push_back(Mj);
    rep.acceptance.push_back(static_cast<double>(pilot.accepts + rest.accepts) /
                             static_cast<double>(pilot.proposals + rest.proposals));
    sum_m += Mj;
    S = std::max(1, Mj / 2);
  }

  rep.samples = st.particles;
  rep.param_names = model.theta_names;
  rep.param_names.insert(rep.param_names.end(), model.phi_names.begin(), model.phi_names.end());
  rep.g_evals = model.forward.eval_count() - evals_before;
  rep.g_evals_formula = static_cast<long long>(N) + static_cast<long long>(N) * sum_m;
  return rep;
}

}  // namespace ekinfer
