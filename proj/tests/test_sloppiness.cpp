#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ekinfer/rng.hpp"
#include "ekinfer/sloppiness.hpp"

using namespace ekinfer;

namespace {

// Lognormal samples whose log has mean mu and covariance L L'.
Matrix lognormal_samples(const Vector& mu, const Matrix& L, int S, std::uint64_t seed) {
  const int d = static_cast<int>(mu.size());
  Matrix out(d, S);
  for (int s = 0; s < S; ++s) {
    auto rng = make_stream(seed, static_cast<std::uint64_t>(s));
    Vector z(d);
    for (int i = 0; i < d; ++i) z(i) = standard_normal(rng);
    out.col(s) = (mu + L * z).array().exp();
  }
  return out;
}

}  // namespace

TEST_CASE("identity covariance gives identity sensitivity") {
  const int S = 20000;
  Vector mu = Vector::Zero(2);
  auto samples = lognormal_samples(mu, Matrix::Identity(2, 2), S, 3);
  auto res = sensitivity_matrix(samples, SensitivityTransform::log_transform);
  double tol = 4.0 / std::sqrt(static_cast<double>(S));
  CHECK(std::abs(res.eigenvalues(0) - 1.0) < 10 * tol);
  CHECK(std::abs(res.eigenvalues(1) - 1.0) < 10 * tol);
  CHECK((res.matrix - Matrix::Identity(2, 2)).lpNorm<Eigen::Infinity>() < 10 * tol);
}

TEST_CASE("diag(4,1) log covariance recovers eigenvalues (1, 0.25)") {
  const int S = 100000;
  Vector mu(2);
  mu << 0.3, -0.2;
  Matrix L = Matrix::Zero(2, 2);
  L(0, 0) = 2.0;  // variance 4
  L(1, 1) = 1.0;
  auto samples = lognormal_samples(mu, L, S, 7);
  auto res = sensitivity_matrix(samples, SensitivityTransform::log_transform);
  CHECK(res.eigenvalues(0) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(res.eigenvalues(1) == doctest::Approx(0.25).epsilon(0.05));
  CHECK(std::abs(res.eigenvectors.col(0).dot(Vector::Unit(2, 1))) > 0.99);

  // known-covariance convergence: relative Frobenius error below 5%
  Matrix truth = Matrix::Zero(2, 2);
  truth(0, 0) = 0.25;
  truth(1, 1) = 1.0;
  CHECK((res.matrix - truth).norm() / truth.norm() < 0.05);
}

TEST_CASE("sensitivity result structural invariants") {
  Vector mu(3);
  mu << 0.0, 0.5, -0.3;
  Matrix L(3, 3);
  L << 1.0, 0.0, 0.0, 0.4, 0.8, 0.0, -0.2, 0.1, 0.5;
  auto samples = lognormal_samples(mu, L, 5000, 11);
  auto res = sensitivity_matrix(samples, SensitivityTransform::log_transform);

  for (int k = 1; k < 3; ++k) CHECK(res.eigenvalues(k) <= res.eigenvalues(k - 1));
  CHECK((res.eigenvectors.transpose() * res.eigenvectors - Matrix::Identity(3, 3)).norm() < 1e-10);
  Matrix recon =
      res.eigenvectors * res.eigenvalues.asDiagonal() * res.eigenvectors.transpose();
  CHECK((recon - res.matrix).norm() < 1e-8 * res.matrix.norm());
  CHECK(res.eigenvalues.sum() == doctest::Approx(res.matrix.trace()).epsilon(1e-8));
  // sign convention: largest-magnitude entry positive
  for (int k = 0; k < 3; ++k) {
    Vector v = res.eigenvectors.col(k);
    int imax = 0;
    for (int i = 1; i < 3; ++i)
      if (std::abs(v(i)) > std::abs(v(imax))) imax = i;
    CHECK(v(imax) > 0.0);
  }
}

TEST_CASE("sensitivity error cases") {
  Matrix few(3, 3);
  few.setOnes();
  CHECK_THROWS_AS(sensitivity_matrix(few, SensitivityTransform::log_transform),
                  std::invalid_argument);

  Matrix neg(2, 10);
  neg.setOnes();
  neg(1, 4) = -0.5;
  CHECK_THROWS_WITH_AS(sensitivity_matrix(neg, SensitivityTransform::log_transform),
                       doctest::Contains("coordinate 1"), std::domain_error);

  // perfectly correlated coordinates: singular covariance
  Matrix sing(2, 50);
  auto rng = make_stream(13);
  for (int s = 0; s < 50; ++s) {
    double v = std::exp(standard_normal(rng));
    sing(0, s) = v;
    sing(1, s) = v;
  }
  CHECK_THROWS_WITH_AS(sensitivity_matrix(sing, SensitivityTransform::log_transform),
                       doctest::Contains("singular"), std::runtime_error);

  CHECK_THROWS_AS(sensitivity_matrix(lognormal_samples(Vector::Zero(2), Matrix::Identity(2, 2),
                                                       100, 1),
                                     SensitivityTransform::logit_transform),
                  std::invalid_argument);
}

TEST_CASE("logit transform handles tight bounds and interior samples") {
  // one coordinate bounded in (-0.02, 0.02), one in (0, 1)
  Matrix samples(2, 100);
  auto rng = make_stream(17);
  for (int s = 0; s < 100; ++s) {
    samples(0, s) = -0.02 + 0.04 * uniform01(rng);
    samples(1, s) = uniform01(rng);
  }
  Vector lower(2), upper(2);
  lower << -0.02, 0.0;
  upper << 0.02, 1.0;
  auto res = sensitivity_matrix(samples, SensitivityTransform::logit_transform, lower, upper);
  CHECK(res.matrix.allFinite());

  samples(0, 3) = 0.05;
  CHECK_THROWS_WITH_AS(
      sensitivity_matrix(samples, SensitivityTransform::logit_transform, lower, upper),
      doctest::Contains("coordinate 0"), std::domain_error);
}

TEST_CASE("eigenparameter projections") {
  Matrix samples(2, 3);
  samples << std::exp(1.0), 2.0, 5.0, std::exp(2.0), 3.0, 7.0;

  // basis vector: projection is log theta_1 exactly
  auto e1 = eigenparameter_samples(samples, Vector::Unit(2, 0),
                                   SensitivityTransform::log_transform);
  for (int s = 0; s < 3; ++s) CHECK(e1.values(s) == doctest::Approx(std::log(samples(0, s))));

  // hand value: v = (1,1)/sqrt(2), theta = (e, e^2) -> 3/sqrt(2)
  Vector v(2);
  v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  auto ep = eigenparameter_samples(samples.col(0), v, SensitivityTransform::log_transform);
  CHECK(ep.values(0) == doctest::Approx(3.0 / std::sqrt(2.0)).epsilon(1e-10));

  // constant samples project to a constant
  Matrix cst = Matrix::Constant(2, 5, 2.0);
  cst.row(1).setConstant(3.0);
  auto ec = eigenparameter_samples(cst, v, SensitivityTransform::log_transform);
  double expected = (std::log(2.0) + std::log(3.0)) / std::sqrt(2.0);
  for (int s = 0; s < 5; ++s) CHECK(ec.values(s) == doctest::Approx(expected));

  // sign flip of v flips the projection sign only
  auto en = eigenparameter_samples(samples, -v, SensitivityTransform::log_transform);
  auto epos = eigenparameter_samples(samples, v, SensitivityTransform::log_transform);
  CHECK((en.values + epos.values).norm() < 1e-12);

  Vector bad(2);
  bad << 1.0, 1.0;
  CHECK_THROWS_AS(eigenparameter_samples(samples, bad, SensitivityTransform::log_transform),
                  std::invalid_argument);
}

TEST_CASE("eigenvector report") {
  Vector mu = Vector::Zero(2);
  Matrix L = Matrix::Zero(2, 2);
  L(0, 0) = 2.0;
  L(1, 1) = 1.0;
  auto samples = lognormal_samples(mu, L, 50000, 19);
  auto res = sensitivity_matrix(samples, SensitivityTransform::log_transform);
  auto rows = eigenvector_report(res, 2);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].ratio_to_stiffest == doctest::Approx(1.0));
  CHECK(rows[1].ratio_to_stiffest == doctest::Approx(0.25).epsilon(0.1));
  CHECK(rows[0].k == 1);
  for (const auto& row : rows)
    for (int i = 0; i < row.magnitudes.size(); ++i)
      CHECK(row.magnitudes(i) == doctest::Approx(std::abs(row.components(i))));
  // full table rows are orthonormal
  Matrix V(2, 2);
  V.col(0) = rows[0].components;
  V.col(1) = rows[1].components;
  CHECK((V.transpose() * V - Matrix::Identity(2, 2)).norm() < 1e-10);

  CHECK_THROWS_AS(eigenvector_report(res, 0), std::invalid_argument);
  CHECK_THROWS_AS(eigenvector_report(res, 3), std::invalid_argument);
}
