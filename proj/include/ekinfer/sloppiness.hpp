#pragma once

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ekinfer/ensemble.hpp"

namespace ekinfer {

enum class SensitivityTransform { log_transform, logit_transform };

struct SensitivityResult {
  Matrix matrix;        // d x d sensitivity (inverse transformed-sample covariance)
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // orthonormal columns, matching eigenvalue order
  SensitivityTransform transform = SensitivityTransform::log_transform;
  Vector lower, upper;  // logit bounds per coordinate (logit only)
};

struct EigenparameterSamples {
  int k = 0;
  double eigenvalue = 0.0;
  Vector values;  // one projection per sample
};

namespace detail {

// Coordinatewise transform of a d x S sample block. Samples exactly on a
// logit bound are nudged inward by 1e-12 of the width with a warning.
inline Matrix transform_samples(const Matrix& samples, SensitivityTransform transform,
                                const Vector& lower, const Vector& upper) {
  const int d = static_cast<int>(samples.rows());
  const int s = static_cast<int>(samples.cols());
  Matrix t(d, s);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < s; ++j) {
      double v = samples(i, j);
      if (transform == SensitivityTransform::log_transform) {
        if (!(v > 0.0))
          throw std::domain_error("sensitivity transform: nonpositive sample in coordinate " +
                                  std::to_string(i));
        t(i, j) = std::log(v);
      } else {
        double a = lower(i), b = upper(i);
        if (v < a || v > b)
          throw std::domain_error("sensitivity transform: sample outside bounds in coordinate " +
                                  std::to_string(i));
        if (v == a || v == b) {
          std::cerr << "warning: sample on logit bound in coordinate " << i
                    << ", nudging inward\n";
          double eps = 1e-12 * (b - a);
          v = v == a ? a + eps : b - eps;
        }
        double r = (v - a) / (b - a);
        t(i, j) = std::log(r / (1.0 - r));
      }
    }
  }
  return t;
}

}  // namespace detail

// Sensitivity matrix: inverse sample covariance of the transformed posterior
// samples, with a descending eigendecomposition. Noise parameters must be
// excluded by the caller. Eigenvector signs are fixed so the largest-magnitude
// entry is positive (ties toward the lower index).
inline SensitivityResult sensitivity_matrix(const Matrix& samples, SensitivityTransform transform,
                                            const Vector& lower = Vector(),
                                            const Vector& upper = Vector()) {
  const int d = static_cast<int>(samples.rows());
  const int s = static_cast<int>(samples.cols());
  if (s < d + 1) throw std::invalid_argument("sensitivity_matrix: need at least d+1 samples");
  if (transform == SensitivityTransform::logit_transform &&
      (lower.size() != d || upper.size() != d))
    throw std::invalid_argument("sensitivity_matrix: logit transform requires bounds");

  Matrix t = detail::transform_samples(samples, transform, lower, upper);
  Matrix cov = sample_cov(t);
  Eigen::SelfAdjointEigenSolver<Matrix> cond(cov);
  if (cond.eigenvalues().minCoeff() <= 1e-12 * std::max(cond.eigenvalues().maxCoeff(), 0.0))
    throw std::runtime_error(
        "sensitivity_matrix: singular sample covariance; consider jitter or fewer parameters");
  Matrix sens;
  try {
    sens = solve_spd(cov, Matrix::Identity(d, d));
  } catch (const std::runtime_error&) {
    throw std::runtime_error(
        "sensitivity_matrix: singular sample covariance; consider jitter or fewer parameters");
  }
  sens = 0.5 * (sens + sens.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> es(sens);
  SensitivityResult out;
  out.matrix = sens;
  out.transform = transform;
  out.lower = lower;
  out.upper = upper;
  out.eigenvalues.resize(d);
  out.eigenvectors.resize(d, d);
  // Eigen sorts ascending; flip to descending, ties broken by descending
  // first-nonzero eigenvector component via the sign convention below.
  for (int k = 0; k < d; ++k) {
    out.eigenvalues(k) = es.eigenvalues()(d - 1 - k);
    Vector v = es.eigenvectors().col(d - 1 - k);
    int imax = 0;
    for (int i = 1; i < d; ++i)
      if (std::abs(v(i)) > std::abs(v(imax))) imax = i;
    if (v(imax) < 0.0) v = -v;
    out.eigenvectors.col(k) = v;
  }
  return out;
}

// alpha_k(s) = sum_j (v_k)_j T(theta_j(s)) with T the same transform used for
// the sensitivity matrix.
inline EigenparameterSamples eigenparameter_samples(const Matrix& samples, const Vector& v_k,
                                                    SensitivityTransform transform,
                                                    const Vector& lower = Vector(),
                                                    const Vector& upper = Vector()) {
  if (v_k.size() != samples.rows())
    throw std::invalid_argument("eigenparameter_samples: eigenvector dimension mismatch");
  if (std::abs(v_k.norm() - 1.0) > 1e-8)
    throw std::invalid_argument("eigenparameter_samples: eigenvector must have unit norm");
  Matrix t = detail::transform_samples(samples, transform, lower, upper);
  EigenparameterSamples out;
  out.values = t.transpose() * v_k;
  return out;
}

struct EigenvectorReportRow {
  int k = 0;
  double eigenvalue = 0.0;
  double ratio_to_stiffest = 0.0;  // lambda_k / lambda_1
  Vector components;                // (v_k)_j
  Vector magnitudes;                // |(v_k)_j| contribution weights
};

inline std::vector<EigenvectorReportRow> eigenvector_report(const SensitivityResult& result,
                                                            int top_k) {
  const int d = static_cast<int>(result.eigenvalues.size());
  if (top_k < 1 || top_k > d) throw std::invalid_argument("eigenvector_report: top_k out of range");
  std::vector<EigenvectorReportRow> rows;
  rows.reserve(top_k);
  for (int k = 0; k < top_k; ++k) {
    EigenvectorReportRow row;
    row.k = k + 1;
    row.eigenvalue = result.eigenvalues(k);
    row.ratio_to_stiffest = result.eigenvalues(k) / result.eigenvalues(0);
    row.components = result.eigenvectors.col(k);
    row.magnitudes = result.eigenvectors.col(k).cwiseAbs();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ekinfer
