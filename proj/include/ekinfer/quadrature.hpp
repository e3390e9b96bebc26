#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ekinfer/models.hpp"

namespace ekinfer {

struct QuadratureSummary {
  double theta_mean = 0.0;
  double theta_var = 0.0;
  double sigma_mean = 0.0;
  double sigma_var = 0.0;
  double log_norm = 0.0;
};

// Tensor-grid midpoint quadrature of the scalar-sigma posterior
// p(theta, sigma | y) over theta in a +-8 sd box and sigma in (0, B).
// Accumulated in log space for stability.
inline QuadratureSummary scalar_sigma_posterior_quadrature(const ScalarSigmaSpec& spec,
                                                           int grid_n = 400) {
  if (grid_n < 8) throw std::invalid_argument("scalar_sigma_posterior_quadrature: grid too small");
  const int n = spec.n;
  const double ybar = spec.y.mean();
  double ysd = 0.0;
  for (int i = 0; i < n; ++i) ysd += std::pow(spec.y(i) - ybar, 2);
  ysd = std::sqrt(ysd / std::max(1, n - 1));
  const double spread = std::max({spec.tau0, ysd, 1e-3});
  const double tlo = std::min(spec.mu0, ybar) - 8.0 * spread;
  const double thi = std::max(spec.mu0, ybar) + 8.0 * spread;
  const double dt = (thi - tlo) / grid_n;
  const double ds = spec.sigma_upper / grid_n;

  std::vector<double> logp(static_cast<std::size_t>(grid_n) * grid_n);
  double logmax = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid_n; ++i) {
    const double theta = tlo + (i + 0.5) * dt;
    double ssq = 0.0;
    for (int k = 0; k < n; ++k) ssq += std::pow(spec.y(k) - theta, 2);
    const double zp = (theta - spec.mu0) / spec.tau0;
    const double logprior = -0.5 * zp * zp;
    for (int j = 0; j < grid_n; ++j) {
      const double sigma = (j + 0.5) * ds;
      const double lp =
          -0.5 * n * std::log(sigma * sigma) - 0.5 * ssq / (sigma * sigma) + logprior;
      logp[static_cast<std::size_t>(i) * grid_n + j] = lp;
      if (lp > logmax) logmax = lp;
    }
  }

  double z = 0.0, st = 0.0, st2 = 0.0, ss = 0.0, ss2 = 0.0;
  for (int i = 0; i < grid_n; ++i) {
    const double theta = tlo + (i + 0.5) * dt;
    for (int j = 0; j < grid_n; ++j) {
      const double sigma = (j + 0.5) * ds;
      const double p = std::exp(logp[static_cast<std::size_t>(i) * grid_n + j] - logmax);
      z += p;
      st += p * theta;
      st2 += p * theta * theta;
      ss += p * sigma;
      ss2 += p * sigma * sigma;
    }
  }

  QuadratureSummary out;
  out.theta_mean = st / z;
  out.theta_var = st2 / z - out.theta_mean * out.theta_mean;
  out.sigma_mean = ss / z;
  out.sigma_var = ss2 / z - out.sigma_mean * out.sigma_mean;
  out.log_norm = logmax + std::log(z * dt * ds);
  return out;
}

}  // namespace ekinfer
