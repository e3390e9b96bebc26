#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ekinfer/rng.hpp"

namespace ekinfer {

// An ensemble is a d x N matrix, one particle per column.
using Ensemble = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline Vector sample_mean(const Ensemble& e) {
  if (e.cols() < 1) throw std::invalid_argument("sample_mean: empty ensemble");
  return e.rowwise().mean();
}

// Unbiased (N-1 denominator) sample covariance of the columns.
inline Matrix sample_cov(const Ensemble& e) {
  const auto n = e.cols();
  if (n < 2) throw std::invalid_argument("sample_cov: need at least 2 particles");
  Ensemble dev = e.colwise() - e.rowwise().mean().eval();
  return (dev * dev.transpose()) / static_cast<double>(n - 1);
}

inline Matrix sample_cross_cov(const Ensemble& a, const Ensemble& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("sample_cross_cov: ensembles have different sizes");
  const auto n = a.cols();
  if (n < 2) throw std::invalid_argument("sample_cross_cov: need at least 2 particles");
  Ensemble da = a.colwise() - a.rowwise().mean().eval();
  Ensemble db = b.colwise() - b.rowwise().mean().eval();
  return (da * db.transpose()) / static_cast<double>(n - 1);
}

// Effective sample size 1 / sum w_n^2 of normalized weights.
inline double ess(const Vector& w) {
  if (std::abs(w.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("ess: weights are not normalized");
  return 1.0 / w.squaredNorm();
}

// Stable exp-normalization of log weights (log-sum-exp shift by the max).
inline Vector normalize_log_weights(const Vector& logw) {
  if (logw.size() == 0) throw std::invalid_argument("normalize_log_weights: empty input");
  double m = logw.maxCoeff();
  if (!std::isfinite(m))
    throw std::runtime_error("normalize_log_weights: all particles have zero weight");
  // scalar std::exp keeps exp(-inf) exactly zero (vectorized exp may not)
  Vector w(logw.size());
  for (int i = 0; i < logw.size(); ++i) w(i) = std::exp(logw(i) - m);
  return w / w.sum();
}

enum class ResampleScheme { systematic, multinomial };

inline std::vector<int> resample_indices(const Vector& w, std::mt19937_64& rng,
                                         ResampleScheme scheme = ResampleScheme::systematic) {
  if (std::abs(w.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("resample_indices: weights are not normalized");
  const int n = static_cast<int>(w.size());
  std::vector<int> idx(n);
  if (scheme == ResampleScheme::systematic) {
    double u = uniform01(rng) / n;
    double cum = w(0);
    int j = 0;
    for (int i = 0; i < n; ++i) {
      double point = u + static_cast<double>(i) / n;
      while (point > cum && j + 1 < n) cum += w(++j);
      idx[i] = j;
    }
  } else {
    std::vector<double> cdf(n);
    double cum = 0.0;
    for (int i = 0; i < n; ++i) cdf[i] = (cum += w(i));
    for (int i = 0; i < n; ++i) {
      double u = uniform01(rng) * cum;
      idx[i] = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    }
  }
  return idx;
}

inline Ensemble resample_systematic(const Ensemble& e, const Vector& w, std::mt19937_64& rng) {
  auto idx = resample_indices(w, rng, ResampleScheme::systematic);
  Ensemble out(e.rows(), e.cols());
  for (int i = 0; i < e.cols(); ++i) out.col(i) = e.col(idx[i]);
  return out;
}

// Symmetric PSD square root via eigendecomposition, tolerating zero or
// rank-deficient matrices (clamps negative eigenvalues at zero).
inline Matrix psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Solve m * X = rhs for symmetric positive definite m via Cholesky. If the
// factorization fails, jitter the diagonal once by 1e-8 * trace(m)/d and
// retry; a second failure is fatal.
inline Matrix solve_spd(const Matrix& m, const Matrix& rhs) {
  if (m.rows() != m.cols() || m.rows() != rhs.rows())
    throw std::invalid_argument("solve_spd: dimension mismatch");
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  double jitter = 1e-8 * m.trace() / static_cast<double>(m.rows());
  Matrix mj = m + jitter * Matrix::Identity(m.rows(), m.cols());
  Eigen::LLT<Matrix> llt2(mj);
  if (llt2.info() == Eigen::Success) return llt2.solve(rhs);
  // Identify the leading minor that breaks positive definiteness.
  int pivot = 0;
  for (int k = 1; k <= m.rows(); ++k) {
    Eigen::LLT<Matrix> sub(m.topLeftCorner(k, k));
    if (sub.info() != Eigen::Success) {
      pivot = k;
      break;
    }
  }
  throw std::runtime_error("solve_spd: matrix not positive definite (pivot " +
                           std::to_string(pivot) + ") even after jitter");
}

}  // namespace ekinfer
