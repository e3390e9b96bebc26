#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ekinfer/ensemble.hpp"
#include "ekinfer/models.hpp"
#include "ekinfer/parallel.hpp"
#include "ekinfer/rng.hpp"

namespace ekinfer {

// Type-7 quantile (linear interpolation on sorted order statistics).
inline double quantile_type7(std::vector<double> x, double p) {
  if (x.empty()) throw std::invalid_argument("quantile_type7: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile_type7: p outside [0,1]");
  std::sort(x.begin(), x.end());
  double h = (static_cast<double>(x.size()) - 1.0) * p;
  std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - lo) * (x[lo + 1] - x[lo]);
}

struct PredictiveBands {
  Matrix draws;    // d_y x S predictive draws
  Vector median;   // per observation coordinate
  Vector lower;    // 2.5% quantile
  Vector upper;    // 97.5% quantile
  long long g_evals = 0;  // one per posterior draw, counted separately
};

// One y* ~ N(G(theta*), Gamma(theta*, phi*)) per posterior draw, with the
// 95% central credible band per coordinate.
inline PredictiveBands posterior_predictive(const Ensemble& samples, const StaticModel& model,
                                            std::uint64_t seed) {
  const int S = static_cast<int>(samples.cols());
  if (S < 1) throw std::invalid_argument("posterior_predictive: empty samples");
  const int dt = model.prior_theta.dim();
  const int dp = model.noise.dim_phi;
  if (samples.rows() != dt + dp)
    throw std::invalid_argument("posterior_predictive: sample dimension mismatch");
  const int dy = model.forward.dim_y();

  const long long evals_before = model.forward.eval_count();
  PredictiveBands out;
  out.draws.resize(dy, S);
  parallel_for(S, [&](int s) {
    auto rng = make_stream(seed, 0x9d1cULL, static_cast<std::uint64_t>(s));
    Vector theta = samples.col(s).head(dt);
    Vector phi = samples.col(s).tail(dp);
    Vector g = model.forward.evaluate(theta);
    Matrix gamma = model.noise.gamma(theta, phi);
    Matrix sqrtg = psd_sqrt(gamma);
    Vector z(dy);
    for (int i = 0; i < dy; ++i) z(i) = standard_normal(rng);
    out.draws.col(s) = g + sqrtg * z;
  });
  out.g_evals = model.forward.eval_count() - evals_before;

  out.median.resize(dy);
  out.lower.resize(dy);
  out.upper.resize(dy);
  for (int i = 0; i < dy; ++i) {
    std::vector<double> row(out.draws.row(i).begin(), out.draws.row(i).end());
    out.median(i) = quantile_type7(row, 0.5);
    out.lower(i) = quantile_type7(row, 0.025);
    out.upper(i) = quantile_type7(row, 0.975);
  }
  return out;
}

}  // namespace ekinfer
