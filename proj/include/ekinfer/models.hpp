#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ekinfer/ensemble.hpp"
#include "ekinfer/prior.hpp"
#include "ekinfer/rng.hpp"

namespace ekinfer {

// Deterministic forward map G(theta) with a shared evaluation counter. The
// counter is the single source of truth for the cost metric, so copies of a
// model share it. Incremented atomically; safe to evaluate concurrently.
class ForwardModel {
 public:
  ForwardModel() = default;
  ForwardModel(int dim_theta, int dim_y, std::function<Vector(const Vector&)> fn)
      : dim_theta_(dim_theta),
        dim_y_(dim_y),
        fn_(std::move(fn)),
        counter_(std::make_shared<std::atomic<long long>>(0)) {}

  Vector evaluate(const Vector& theta) const {
    counter_->fetch_add(1, std::memory_order_relaxed);
    return fn_(theta);
  }

  int dim_theta() const { return dim_theta_; }
  int dim_y() const { return dim_y_; }
  long long eval_count() const { return counter_->load(std::memory_order_relaxed); }
  void reset_count() const { counter_->store(0, std::memory_order_relaxed); }

 private:
  int dim_theta_ = 0;
  int dim_y_ = 0;
  std::function<Vector(const Vector&)> fn_;
  std::shared_ptr<std::atomic<long long>> counter_;
};

// Measurement-error covariance Gamma(theta, phi). d_phi = 0 means the
// covariance is fully known and phi is ignored.
struct NoiseModel {
  int dim_phi = 0;
  int dim_y = 0;
  std::function<Matrix(const Vector& theta, const Vector& phi)> gamma;
};

struct StaticModel {
  ForwardModel forward;
  NoiseModel noise;
  Prior prior_theta;
  Prior prior_phi;  // empty when dim_phi = 0
  Vector data;
  std::vector<std::string> theta_names;
  std::vector<std::string> phi_names;

  // Analytic conjugate posterior, populated only by make_linear_gaussian.
  bool has_conjugate = false;
  Vector conj_mean;
  Matrix conj_cov;
};

inline bool is_diagonal(const Matrix& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (i != j && m(i, j) != 0.0) return false;
  return true;
}

// log N(y | g, gamma) via Cholesky. Diagonal covariances (all built-ins) take
// the O(d) path.
inline double gaussian_loglik(const Vector& y, const Vector& g, const Matrix& gamma) {
  if (y.size() != g.size() || gamma.rows() != y.size() || gamma.cols() != y.size())
    throw std::invalid_argument("gaussian_loglik: dimension mismatch");
  const double d = static_cast<double>(y.size());
  Vector r = y - g;
  if (is_diagonal(gamma)) {
    double logdet = 0.0, quad = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      double v = gamma(i, i);
      if (!(v > 0.0)) throw std::runtime_error("gaussian_loglik: nonpositive diagonal variance");
      logdet += std::log(v);
      quad += r(i) * r(i) / v;
    }
    return -0.5 * (d * kLogTwoPi + logdet + quad);
  }
  Eigen::LLT<Matrix> llt(gamma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gaussian_loglik: covariance not positive definite");
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double quad = r.dot(llt.solve(r));
  return -0.5 * (d * kLogTwoPi + logdet + quad);
}

// Linear model G(theta) = A theta with fixed Gaussian noise and independent
// Gaussian prior (diagonal prior covariance). Carries the analytic conjugate
// posterior for oracle checks.
inline StaticModel make_linear_gaussian(const Matrix& A, const Matrix& gamma0,
                                        const Vector& prior_mean, const Matrix& prior_cov,
                                        const Vector& y) {
  const int dt = static_cast<int>(A.cols());
  const int dy = static_cast<int>(A.rows());
  if (prior_mean.size() != dt || prior_cov.rows() != dt || prior_cov.cols() != dt ||
      gamma0.rows() != dy || gamma0.cols() != dy || y.size() != dy)
    throw std::invalid_argument("make_linear_gaussian: dimension mismatch");
  if (!is_diagonal(prior_cov))
    throw std::invalid_argument("make_linear_gaussian: prior covariance must be diagonal");

  StaticModel m;
  m.forward = ForwardModel(dt, dy, [A](const Vector& theta) -> Vector { return A * theta; });
  Matrix g0 = gamma0;
  m.noise = NoiseModel{0, dy, [g0](const Vector&, const Vector&) { return g0; }};
  Prior prior;
  for (int i = 0; i < dt; ++i)
    prior.append(Prior::normal(prior_mean(i), std::sqrt(prior_cov(i, i))));
  m.prior_theta = prior;
  m.data = y;
  for (int i = 0; i < dt; ++i) m.theta_names.push_back("theta" + std::to_string(i + 1));

  // C_post = (C0^-1 + A' G^-1 A)^-1, mu_post = C_post (C0^-1 mu0 + A' G^-1 y)
  Matrix c0_inv = solve_spd(prior_cov, Matrix::Identity(dt, dt));
  Matrix g_inv_a = solve_spd(gamma0, A);
  Matrix prec = c0_inv + A.transpose() * g_inv_a;
  m.conj_cov = solve_spd(prec, Matrix::Identity(dt, dt));
  m.conj_mean = m.conj_cov * (c0_inv * prior_mean + A.transpose() * solve_spd(gamma0, y));
  m.has_conjugate = true;
  return m;
}

// Frozen synthetic dataset metadata for the built-in surrogate models.
struct SurrogateFixture {
  Vector grid;
  int timepoints = 0;
  int replicates = 0;
  Vector theta_true;
  double sigma_true = 0.0;
  std::uint64_t seed = 0;
  Vector y;
};

// Cumulative-growth surrogate: x_t = th1 (1 - exp(-th2 t)) + th3 t on an
// evenly spaced grid over (0, 301], R replicates per timepoint stacked into
// R^{T*R}. Noise variance per coordinate is (0.04 x_t)^2 + sigma^2, so the
// covariance depends on both theta and phi = sigma.
inline StaticModel make_mineralisation_surrogate(int T, int R, const Vector& theta_true,
                                                 double sigma_true, std::uint64_t seed,
                                                 SurrogateFixture* fixture = nullptr) {
  if (T < 2 || R < 1) throw std::invalid_argument("make_mineralisation_surrogate: need T >= 2, R >= 1");
  if (!(sigma_true > 0))
    throw std::invalid_argument("make_mineralisation_surrogate: need sigma_true > 0");
  if (theta_true.size() != 3)
    throw std::invalid_argument("make_mineralisation_surrogate: theta_true must have 3 entries");

  const double horizon = 301.0;
  Vector grid(T);
  for (int j = 0; j < T; ++j) grid(j) = horizon * static_cast<double>(j + 1) / T;
  const int dy = T * R;

  auto mean_curve = [grid, T](const Vector& theta) -> Vector {
    Vector x(T);
    for (int j = 0; j < T; ++j)
      x(j) = theta(0) * (1.0 - std::exp(-theta(1) * grid(j))) + theta(2) * grid(j);
    return x;
  };

  StaticModel m;
  m.forward = ForwardModel(3, dy, [mean_curve, T, R, dy](const Vector& theta) -> Vector {
    Vector x = mean_curve(theta);
    Vector g(dy);
    for (int j = 0; j < T; ++j)
      for (int r = 0; r < R; ++r) g(j * R + r) = x(j);
    return g;
  });
  m.noise = NoiseModel{1, dy, [mean_curve, T, R, dy](const Vector& theta, const Vector& phi) {
                         Vector x = mean_curve(theta);
                         Matrix gamma = Matrix::Zero(dy, dy);
                         double s2 = phi(0) * phi(0);
                         for (int j = 0; j < T; ++j) {
                           double zeta = 0.04 * x(j);
                           for (int r = 0; r < R; ++r) gamma(j * R + r, j * R + r) = zeta * zeta + s2;
                         }
                         return gamma;
                       }};
  m.prior_theta = Prior::product({Prior::uniform(0.0, 200.0), Prior::uniform(0.0, 0.05),
                                  Prior::uniform(0.0, 0.2)});
  m.prior_phi = Prior::uniform(0.0, 20.0 * sigma_true);
  m.theta_names = {"theta1", "theta2", "theta3"};
  m.phi_names = {"sigma"};

  // Data are generated once from (theta_true, sigma_true) with the given seed.
  Vector x = mean_curve(theta_true);
  auto rng = make_stream(seed, 0x6d696eULL);
  Vector y(dy);
  for (int j = 0; j < T; ++j) {
    double sd = std::sqrt(std::pow(0.04 * x(j), 2) + sigma_true * sigma_true);
    for (int r = 0; r < R; ++r) y(j * R + r) = x(j) + sd * standard_normal(rng);
  }
  m.data = y;

  if (fixture) {
    fixture->grid = grid;
    fixture->timepoints = T;
    fixture->replicates = R;
    fixture->theta_true = theta_true;
    fixture->sigma_true = sigma_true;
    fixture->seed = seed;
    fixture->y = y;
  }
  return m;
}

// Constant-mean model G(theta) = theta * 1_n with Gamma(phi) = sigma^2 I.
// Small enough for a 2-D tensor-grid quadrature oracle over (theta, sigma).
struct ScalarSigmaSpec {
  int n = 0;
  double mu0 = 0.0;
  double tau0 = 1.0;
  double sigma_upper = 0.0;
  Vector y;
};

inline StaticModel make_scalar_sigma_model(int n, double theta_true, double sigma_true,
                                           std::uint64_t seed, ScalarSigmaSpec* spec = nullptr,
                                           double mu0 = 0.0, double tau0 = 2.0,
                                           double sigma_upper = 10.0) {
  if (n < 1) throw std::invalid_argument("make_scalar_sigma_model: need n >= 1");
  StaticModel m;
  m.forward = ForwardModel(1, n, [n](const Vector& theta) -> Vector {
    return Vector::Constant(n, theta(0));
  });
  m.noise = NoiseModel{1, n, [n](const Vector&, const Vector& phi) -> Matrix {
                         return (phi(0) * phi(0)) * Matrix::Identity(n, n);
                       }};
  m.prior_theta = Prior::normal(mu0, tau0);
  m.prior_phi = Prior::uniform(0.0, sigma_upper);
  m.theta_names = {"theta"};
  m.phi_names = {"sigma"};

  auto rng = make_stream(seed, 0x736373ULL);
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = theta_true + sigma_true * standard_normal(rng);
  m.data = y;

  if (spec) {
    spec->n = n;
    spec->mu0 = mu0;
    spec->tau0 = tau0;
    spec->sigma_upper = sigma_upper;
    spec->y = y;
  }
  return m;
}

}  // namespace ekinfer
