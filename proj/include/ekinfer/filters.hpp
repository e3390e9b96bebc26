#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ekinfer/ensemble.hpp"
#include "ekinfer/models.hpp"
#include "ekinfer/parallel.hpp"
#include "ekinfer/rng.hpp"

namespace ekinfer {

struct LGSSM {
  Matrix F;   // d_x x d_x transition
  Matrix Q;   // d_x x d_x transition noise (PSD)
  Matrix H;   // d_y x d_x observation
  Matrix R;   // d_y x d_y observation noise (SPD)
  Vector x0_mean;
  Matrix C0;  // d_x x d_x initial covariance
};

struct FilterOutput {
  Matrix means;               // T x d_x filtered means
  std::vector<Matrix> covs;   // T filtered covariances
  double loglik = 0.0;        // marginal log-likelihood (Kalman, PF)
  Ensemble final_ensemble;    // EnKF only
};

inline FilterOutput kalman_filter(const LGSSM& m, const Matrix& y) {
  const int dx = static_cast<int>(m.F.rows());
  const int dy = static_cast<int>(m.H.rows());
  const int T = static_cast<int>(y.rows());
  if (y.cols() != dy && T > 0) throw std::invalid_argument("kalman_filter: data dimension mismatch");

  FilterOutput out;
  out.means.resize(T, dx);
  out.covs.reserve(T);
  Vector x = m.x0_mean;
  Matrix c = m.C0;
  for (int t = 0; t < T; ++t) {
    Vector xp = m.F * x;
    Matrix cp = m.F * c * m.F.transpose() + m.Q;
    Matrix s = m.H * cp * m.H.transpose() + m.R;
    Vector innov = y.row(t).transpose() - m.H * xp;
    out.loglik += gaussian_loglik(y.row(t).transpose(), m.H * xp, s);
    // K = cp H' s^-1, computed as (s^-1 (H cp))' to keep the solve SPD-sided
    Matrix k = solve_spd(s, m.H * cp).transpose();
    x = xp + k * innov;
    c = (Matrix::Identity(dx, dx) - k * m.H) * cp;
    c = 0.5 * (c + c.transpose());
    out.means.row(t) = x.transpose();
    out.covs.push_back(c);
  }
  return out;
}

// Generic state space model. obs_mean/obs_cov are only needed for the
// Gaussian-observation EnKF variant.
struct SSM {
  int dim_x = 0;
  int dim_y = 0;
  std::function<Vector(const Vector&, std::mt19937_64&)> transition_sample;
  std::function<double(const Vector& y, const Vector& x)> obs_logpdf;
  std::function<Vector(const Vector& x, std::mt19937_64&)> obs_sample;
  std::function<Vector(std::mt19937_64&)> init_sample;
  std::function<Vector(const Vector&)> obs_mean;
  Matrix obs_cov;
  bool has_obs_mean = false;
};

inline SSM make_lgssm_ssm(const LGSSM& m) {
  SSM s;
  s.dim_x = static_cast<int>(m.F.rows());
  s.dim_y = static_cast<int>(m.H.rows());
  Matrix q_sqrt = psd_sqrt(m.Q);
  Matrix r_sqrt = psd_sqrt(m.R);
  Matrix c0_sqrt = psd_sqrt(m.C0);
  Matrix F = m.F, H = m.H, R = m.R;
  Vector x0 = m.x0_mean;
  int dx = s.dim_x, dy = s.dim_y;
  s.transition_sample = [F, q_sqrt, dx](const Vector& x, std::mt19937_64& rng) -> Vector {
    Vector z(dx);
    for (int i = 0; i < dx; ++i) z(i) = standard_normal(rng);
    return F * x + q_sqrt * z;
  };
  s.obs_logpdf = [H, R](const Vector& y, const Vector& x) {
    return gaussian_loglik(y, H * x, R);
  };
  s.obs_sample = [H, r_sqrt, dy](const Vector& x, std::mt19937_64& rng) -> Vector {
    Vector z(dy);
    for (int i = 0; i < dy; ++i) z(i) = standard_normal(rng);
    return H * x + r_sqrt * z;
  };
  s.init_sample = [x0, c0_sqrt, dx](std::mt19937_64& rng) -> Vector {
    Vector z(dx);
    for (int i = 0; i < dx; ++i) z(i) = standard_normal(rng);
    return x0 + c0_sqrt * z;
  };
  s.obs_mean = [H](const Vector& x) -> Vector { return H * x; };
  s.obs_cov = R;
  s.has_obs_mean = true;
  return s;
}

enum class EnkfVariant { perturbed_obs, gaussian_obs };

inline FilterOutput enkf(const SSM& m, const Matrix& y, int N, EnkfVariant variant,
                         std::uint64_t seed) {
  if (N < 2) throw std::invalid_argument("enkf: need N >= 2");
  if (variant == EnkfVariant::gaussian_obs && !m.has_obs_mean)
    throw std::invalid_argument("enkf: gaussian_obs variant requires obs_mean and obs_cov");
  const int T = static_cast<int>(y.rows());

  Ensemble x(m.dim_x, N);
  parallel_for(N, [&](int n) {
    auto rng = make_stream(seed, 0u, static_cast<unsigned>(n), 0u);
    x.col(n) = m.init_sample(rng);
  });

  Matrix r_sqrt;
  if (variant == EnkfVariant::gaussian_obs) r_sqrt = psd_sqrt(m.obs_cov);

  FilterOutput out;
  out.means.resize(T, m.dim_x);
  out.covs.reserve(T);
  for (int t = 1; t <= T; ++t) {
    Ensemble xp(m.dim_x, N), yp(m.dim_y, N);
    if (variant == EnkfVariant::perturbed_obs) {
      parallel_for(N, [&](int n) {
        auto rng = make_stream(seed, static_cast<unsigned>(t), static_cast<unsigned>(n), 1u);
        xp.col(n) = m.transition_sample(x.col(n), rng);
        yp.col(n) = m.obs_sample(xp.col(n), rng);
      });
    } else {
      Ensemble g(m.dim_y, N);
      parallel_for(N, [&](int n) {
        auto rng = make_stream(seed, static_cast<unsigned>(t), static_cast<unsigned>(n), 1u);
        xp.col(n) = m.transition_sample(x.col(n), rng);
        g.col(n) = m.obs_mean(xp.col(n));
        Vector z(m.dim_y);
        for (int i = 0; i < m.dim_y; ++i) z(i) = standard_normal(rng);
        yp.col(n) = g.col(n) + r_sqrt * z;
      });
      Matrix cxy = sample_cross_cov(xp, g);
      Matrix cyy = sample_cov(g) + m.obs_cov;
      Matrix resid = (-yp).colwise() + y.row(t - 1).transpose().eval();
      x = xp + cxy * solve_spd(cyy, resid);
      out.means.row(t - 1) = sample_mean(x).transpose();
      out.covs.push_back(sample_cov(x));
      continue;
    }
    Matrix cxy = sample_cross_cov(xp, yp);
    Matrix cyy = sample_cov(yp);
    Matrix resid = (-yp).colwise() + y.row(t - 1).transpose().eval();
    x = xp + cxy * solve_spd(cyy, resid);
    out.means.row(t - 1) = sample_mean(x).transpose();
    out.covs.push_back(sample_cov(x));
  }
  out.final_ensemble = x;
  return out;
}

// Bootstrap particle filter: resample, propagate, reweight at every step.
// The marginal likelihood estimate accumulates the pre-normalization weight
// averages via log-sum-exp.
inline FilterOutput bootstrap_pf(const SSM& m, const Matrix& y, int N, std::uint64_t seed) {
  if (N < 2) throw std::invalid_argument("bootstrap_pf: need N >= 2");
  const int T = static_cast<int>(y.rows());

  FilterOutput out;
  out.means.resize(T, m.dim_x);
  out.covs.reserve(T);
  if (T == 0) return out;

  Ensemble x(m.dim_x, N);
  parallel_for(N, [&](int n) {
    auto rng = make_stream(seed, 0u, static_cast<unsigned>(n), 0u);
    x.col(n) = m.init_sample(rng);
  });
  Vector w = Vector::Constant(N, 1.0 / N);

  for (int t = 1; t <= T; ++t) {
    auto rng_rs = make_stream(seed, static_cast<unsigned>(t), 0u, 2u);
    x = resample_systematic(x, w, rng_rs);
    Vector logw(N);
    parallel_for(N, [&](int n) {
      auto rng = make_stream(seed, static_cast<unsigned>(t), static_cast<unsigned>(n), 1u);
      x.col(n) = m.transition_sample(x.col(n), rng);
      logw(n) = m.obs_logpdf(y.row(t - 1).transpose(), x.col(n));
    });
    double mx = logw.maxCoeff();
    if (!std::isfinite(mx))
      throw std::runtime_error("bootstrap_pf: all particles have zero weight at step " +
                               std::to_string(t));
    double sum = (logw.array() - mx).exp().sum();
    out.loglik += mx + std::log(sum) - std::log(static_cast<double>(N));
    w = (logw.array() - mx).exp();
    w /= w.sum();

    Vector mean = x * w;
    Ensemble dev = x.colwise() - mean;
    Matrix cov = Matrix::Zero(m.dim_x, m.dim_x);
    for (int n = 0; n < N; ++n) cov += w(n) * dev.col(n) * dev.col(n).transpose();
    out.means.row(t - 1) = mean.transpose();
    out.covs.push_back(cov);
  }
  return out;
}

}  // namespace ekinfer
