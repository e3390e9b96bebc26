#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "ekinfer/tempersmc.hpp"

using namespace ekinfer;

namespace {

StaticModel scalar_conjugate() {
  Matrix one = Matrix::Identity(1, 1);
  Vector y(1);
  y << 1.0;
  return make_linear_gaussian(one, one, Vector::Zero(1), one, y);
}

}  // namespace

TEST_CASE("adapt_alpha trivial cases") {
  Vector equal = Vector::Constant(50, -3.7);
  CHECK(adapt_alpha(equal, 0.0, 25.0) == 1.0);

  // mild spread already satisfies the target at alpha = 1
  Vector mild(4);
  mild << -1.0, -1.01, -0.99, -1.005;
  CHECK(adapt_alpha(mild, 0.3, 2.0) == 1.0);

  CHECK_THROWS_AS(adapt_alpha(mild, 1.0, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(adapt_alpha(mild, 0.0, 0.5), std::invalid_argument);
}

TEST_CASE("adapt_alpha two-particle closed form") {
  // w2/w1 = exp(-alpha L); ESS = (1 + r)^2 / (1 + r^2) with r = exp(-alpha L).
  const double L = 10.0, target = 1.2;
  Vector loglik(2);
  loglik << 0.0, -L;
  double alpha = adapt_alpha(loglik, 0.0, target);

  auto ess_closed = [&](double a) {
    double r = std::exp(-a * L);
    return (1.0 + r) * (1.0 + r) / (1.0 + r * r);
  };
  // independent scalar root-finder for ESS(alpha) = target
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (ess_closed(mid) >= target)
      lo = mid;
    else
      hi = mid;
  }
  CHECK(alpha == doctest::Approx(lo).epsilon(1e-6));
  CHECK(ess_closed(alpha) == doctest::Approx(target).epsilon(1e-5));
}

TEST_CASE("adapt_alpha is invariant to loglik shifts") {
  auto rng = make_stream(5);
  Vector ll(100);
  for (int i = 0; i < 100; ++i) ll(i) = -50.0 * uniform01(rng);
  double a0 = adapt_alpha(ll, 0.0, 50.0);
  double a1 = adapt_alpha((ll.array() + 1234.5).matrix(), 0.0, 50.0);
  CHECK(a0 == doctest::Approx(a1).epsilon(1e-12));
}

TEST_CASE("adapt_repeats") {
  CHECK(adapt_repeats(0.5, 0.01) == 7);
  CHECK(adapt_repeats(1.0, 0.01) == 5);   // 1 before the floor clamp
  CHECK(adapt_repeats(1.0, 0.01, 1) == 1);
  CHECK(adapt_repeats(0.0, 0.01) == 500);
  CHECK(adapt_repeats(0.23, 0.01) == 18);  // ceil(log 0.01 / log 0.77)
  CHECK(adapt_repeats(0.9999, 0.01) == 5);
  CHECK_THROWS_AS(adapt_repeats(0.5, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(adapt_repeats(-0.1, 0.01), std::invalid_argument);
}

TEST_CASE("mh_mutate accepts everything at alpha=0 under a wide flat prior") {
  StaticModel m;
  m.forward = ForwardModel(1, 1, [](const Vector& t) { return t; });
  Matrix one = Matrix::Identity(1, 1);
  m.noise = NoiseModel{0, 1, [one](const Vector&, const Vector&) { return one; }};
  m.prior_theta = Prior::uniform(-1e6, 1e6);
  m.data = Vector::Zero(1);

  TemperState st;
  st.particles = Ensemble::Zero(1, 50);
  st.loglik.resize(50);
  st.logprior.resize(50);
  for (int n = 0; n < 50; ++n) {
    st.loglik(n) = gaussian_loglik(m.data, st.particles.col(n), one);
    st.logprior(n) = m.prior_theta.log_pdf(st.particles.col(n));
  }
  st.alpha = 0.0;
  auto stats = mh_mutate(st, m, 20, one, 7, 2u);
  CHECK(stats.proposals == 1000);
  CHECK(stats.rate() == doctest::Approx(1.0));
}

TEST_CASE("mh_mutate with a vanishing proposal leaves particles in place") {
  auto m = scalar_conjugate();
  TemperState st;
  st.particles.resize(1, 20);
  auto rng = make_stream(9);
  for (int n = 0; n < 20; ++n) st.particles(0, n) = standard_normal(rng);
  st.loglik.resize(20);
  st.logprior.resize(20);
  for (int n = 0; n < 20; ++n) {
    st.loglik(n) = gaussian_loglik(m.data, st.particles.col(n), Matrix::Identity(1, 1));
    st.logprior(n) = m.prior_theta.log_pdf(st.particles.col(n));
  }
  st.alpha = 1.0;
  Ensemble before = st.particles;
  auto stats = mh_mutate(st, m, 10, 1e-30 * Matrix::Identity(1, 1), 11, 2u);
  CHECK(stats.rate() == doctest::Approx(1.0));
  CHECK((st.particles - before).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("mh_mutate preserves the conjugate posterior at alpha=1") {
  auto m = scalar_conjugate();
  m.forward.reset_count();
  const int N = 1000, reps = 100;
  TemperState st;
  st.particles.resize(1, N);
  st.loglik.resize(N);
  st.logprior.resize(N);
  for (int n = 0; n < N; ++n) {
    auto rng = make_stream(13u, static_cast<std::uint64_t>(n));
    st.particles(0, n) = 0.5 + std::sqrt(0.5) * standard_normal(rng);
    st.loglik(n) = gaussian_loglik(m.data, st.particles.col(n), Matrix::Identity(1, 1));
    st.logprior(n) = m.prior_theta.log_pdf(st.particles.col(n));
  }
  st.alpha = 1.0;
  auto stats = mh_mutate(st, m, reps, 0.5 * Matrix::Identity(1, 1), 17, 2u);
  CHECK(m.forward.eval_count() == stats.proposals);  // one G call per proposal

  double mean = st.particles.row(0).mean();
  double var = (st.particles.row(0).array() - mean).square().sum() / (N - 1);
  CHECK(std::abs(mean - 0.5) < 4.0 * std::sqrt(0.5 / N));
  CHECK(std::abs(var - 0.5) < 0.1);
}

TEST_CASE("smc_run recovers the conjugate posterior") {
  auto m = scalar_conjugate();
  SmcConfig cfg;
  cfg.N = 1000;
  cfg.seed = 21;
  auto rep = smc_run(m, cfg);
  CHECK(rep.method == "smc");
  double mean = rep.samples.row(0).mean();
  double var = (rep.samples.row(0).array() - mean).square().sum() / (cfg.N - 1);
  CHECK(std::abs(mean - 0.5) < 0.05);
  CHECK(std::abs(var - 0.5) < 0.15 * 0.5);
}

TEST_CASE("smc_run schedule, ESS floor, and cost accounting") {
  ScalarSigmaSpec spec;
  auto m = make_scalar_sigma_model(15, 1.0, 0.8, 31, &spec);
  m.forward.reset_count();
  SmcConfig cfg;
  cfg.N = 400;
  cfg.seed = 33;
  auto rep = smc_run(m, cfg);

  REQUIRE(!rep.alphas.empty());
  CHECK(rep.alphas.back() == 1.0);
  for (std::size_t i = 1; i < rep.alphas.size(); ++i) CHECK(rep.alphas[i] > rep.alphas[i - 1]);
  double target = cfg.ess_target_fraction * cfg.N;
  for (std::size_t i = 0; i + 1 < rep.ess.size(); ++i)
    CHECK(rep.ess[i] >= target - 1e-6 * cfg.N);

  long long sum_m = 0;
  for (int mj : rep.repeats) sum_m += mj;
  CHECK(rep.g_evals == cfg.N + static_cast<long long>(cfg.N) * sum_m);
  CHECK(rep.g_evals == rep.g_evals_formula);
  CHECK(rep.g_evals == m.forward.eval_count());
  CHECK(rep.param_names.size() == 2);
  CHECK(rep.samples.rows() == 2);
  CHECK(rep.samples.cols() == cfg.N);
}

TEST_CASE("smc_run terminates in one iteration with uninformative data") {
  Matrix one = Matrix::Identity(1, 1);
  Vector y(1);
  y << 1.0;
  auto m = make_linear_gaussian(one, 1e8 * one, Vector::Zero(1), one, y);
  SmcConfig cfg;
  cfg.N = 200;
  cfg.seed = 41;
  auto rep = smc_run(m, cfg);
  CHECK(rep.alphas.size() == 1);
  CHECK(rep.alphas[0] == 1.0);
}

TEST_CASE("first reweight matches the analytic tempered posterior") {
  // Tempered posterior of the scalar conjugate model at temperature a:
  // precision 1 + a, mean a y / (1 + a). Importance-weighted moments after
  // the first reweight, mutation disabled, averaged over 20 seeds.
  const int N = 2000;
  const double target = 0.5 * N;
  Vector err(20);
  for (int s = 0; s < 20; ++s) {
    Vector theta(N), ll(N);
    for (int n = 0; n < N; ++n) {
      auto rng = make_stream(500u + s, static_cast<std::uint64_t>(n));
      theta(n) = standard_normal(rng);
      double r = 1.0 - theta(n);
      ll(n) = -0.5 * (kLogTwoPi + r * r);
    }
    double a = adapt_alpha(ll, 0.0, target);
    Vector w = normalize_log_weights(a * ll);
    err(s) = w.dot(theta) - a * 1.0 / (1.0 + a);
  }
  double mean = err.mean();
  double sd = std::sqrt((err.array() - mean).square().sum() / 19.0);
  CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(20.0));
}

TEST_CASE("smc_run is deterministic across worker counts") {
  ScalarSigmaSpec spec;
  auto m = make_scalar_sigma_model(10, 0.5, 1.0, 51, &spec);
  SmcConfig cfg;
  cfg.N = 200;
  cfg.seed = 53;
  setenv("EKINFER_THREADS", "1", 1);
  auto r1 = smc_run(m, cfg);
  setenv("EKINFER_THREADS", "4", 1);
  auto r4 = smc_run(m, cfg);
  unsetenv("EKINFER_THREADS");
  CHECK((r1.samples - r4.samples).norm() == 0.0);
  CHECK(r1.alphas == r4.alphas);
  CHECK(r1.repeats == r4.repeats);
  CHECK(r1.g_evals == r4.g_evals);
}
