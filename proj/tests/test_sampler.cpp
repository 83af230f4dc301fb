#include "gbs/math.hpp"
#include "gbs/sampler.hpp"

#include <doctest.h>

#include <cmath>

using namespace gbs;

namespace {

// Independent Gaussian with per-coordinate standard deviations `sd`.
TargetDistribution gaussian(const Vector& sd, double half_width = 50.0) {
  const Eigen::Index n = sd.size();
  auto fn = [sd](const Vector& x, Vector* grad) {
    const Vector z = x.cwiseQuotient(sd);
    if (grad) *grad = -z.cwiseQuotient(sd);
    return -0.5 * z.squaredNorm() - sd.array().log().sum() - 0.5 * sd.size() * kLn2Pi;
  };
  return TargetDistribution("gauss", Vector::Constant(n, -half_width), Vector::Constant(n, half_width), fn);
}

SamplerConfig small_config(int chains, int iters, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.n_chains = chains;
  cfg.n_iters = iters;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("config validation and warm-up split") {
  SamplerConfig cfg;
  CHECK(cfg.warmup_iters() == 500);
  CHECK(cfg.draws_per_chain() == 2000);
  cfg.n_chains = 0;
  CHECK_THROWS(cfg.validate());
  cfg = SamplerConfig{};
  cfg.target_accept = 1.5;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("leapfrog energy error is second order") {
  const auto t = make_funnel(4);
  NutsKernel k(t, 1.0, Vector::Ones(4), 0.1, 10);
  auto energy_error = [&](double eps) {
    PhasePoint pt;
    pt.q = Vector::Constant(4, 0.3);
    pt.q[0] = 0.2;
    pt.p = Vector::Constant(4, 0.5);
    k.evaluate(pt);
    const double h0 = k.hamiltonian(pt);
    const int steps = static_cast<int>(std::lround(0.4 / eps));
    for (int s = 0; s < steps; ++s) k.leapfrog(pt, eps);
    return std::abs(k.hamiltonian(pt) - h0);
  };
  const double e1 = energy_error(0.02), e2 = energy_error(0.01);
  CHECK(e1 > 0.0);
  CHECK(e1 / e2 > 3.5);
}

TEST_CASE("Gaussian moments") {
  Vector sd = Vector::Ones(16);
  for (int i = 0; i < 16; ++i) sd[i] = 0.5 + 0.2 * i;
  const auto t = gaussian(sd);
  const auto batch = sample(t, small_config(4, 1500, 5));
  CHECK(batch.n_chains() == 4);
  CHECK(batch.draws_per_chain() == 1200);
  const Matrix x = batch.stacked();
  for (int i = 0; i < 16; ++i) {
    const Moments m = moments(x.col(i));
    CHECK(std::abs(m.mean) < 0.1 * sd[i]);
    CHECK(std::sqrt(m.variance) == doctest::Approx(sd[i]).epsilon(0.1));
  }
  CHECK(batch.evals.gradient > 0);
  CHECK(batch.evals.likelihood >= batch.evals.gradient);
}

TEST_CASE("adapted mass tracks the inverse variances") {
  Vector sd(4);
  sd << 0.1, 1.0, 3.0, 10.0;
  const auto batch = sample(gaussian(sd, 100.0), small_config(2, 2000, 9));
  for (int i = 0; i < 4; ++i) {
    const double ratio = batch.adapted_mass_diag[i] * sd[i] * sd[i];
    CHECK(ratio > 0.5);
    CHECK(ratio < 2.0);
  }
  CHECK(batch.adapted_step_size > 0.0);
}

TEST_CASE("funnel neck coordinate is unbiased") {
  // x1 ~ N(0, 1) truncated to [-4, 4]; a bad trajectory extension skews its mean
  const auto batch = sample(make_funnel(), small_config(4, 3000, 21));
  const Moments m = moments(batch.stacked().col(0));
  CHECK(std::abs(m.mean) < 0.12);
  CHECK(m.variance == doctest::Approx(0.9988).epsilon(0.15));
}

TEST_CASE("zero temperature samples the prior box") {
  const auto t = make_funnel(3);
  const auto batch = sample(t, small_config(4, 2000, 4), 0.0);
  const Matrix x = batch.stacked();
  CHECK((x.col(0).array().abs() <= 4.0).all());
  const Moments m0 = moments(x.col(0)), m1 = moments(x.col(1));
  CHECK(std::abs(m0.mean) < 0.4);
  CHECK(m0.variance == doctest::Approx(64.0 / 12).epsilon(0.15));
  CHECK(std::abs(m1.mean) < 3.0);
  CHECK(m1.variance == doctest::Approx(3600.0 / 12).epsilon(0.15));
}

TEST_CASE("cached densities match the target") {
  const auto t = make_banana(4, 0.5, 3);
  const auto batch = sample(t, small_config(2, 600, 1), 0.7);
  const TemperedTarget tt{t, 0.7};
  for (int c = 0; c < batch.n_chains(); ++c) {
    for (Eigen::Index i = 0; i < batch.draws_per_chain(); i += 37) {
      const Vector x = batch.samples[c].row(i).transpose();
      CHECK(batch.logp[c][i] == doctest::Approx(tt.log_density(x)).epsilon(1e-12));
      CHECK(batch.loglik[c][i] == doctest::Approx(t.log_likelihood(x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("same seed, same draws") {
  const auto t = make_funnel(4);
  const auto a = sample(t, small_config(3, 500, 17));
  const auto b = sample(t, small_config(3, 500, 17));
  const auto c = sample(t, small_config(3, 500, 18));
  CHECK(a.stacked() == b.stacked());
  CHECK(a.evals == b.evals);
  CHECK_FALSE(a.stacked() == c.stacked());
}

TEST_CASE("slice keeps chain layout") {
  const auto batch = sample(make_funnel(3), small_config(2, 500, 2));
  const auto half = batch.slice(0, 80);
  CHECK(half.n_chains() == 2);
  CHECK(half.draws_per_chain() == 80);
  CHECK(half.samples[1].row(5) == batch.samples[1].row(5));
  CHECK(half.logp[1][5] == batch.logp[1][5]);
}

TEST_CASE("prior sample") {
  const auto t = make_cauchy(3);
  const Matrix x = prior_sample(t, 20000, 8);
  CHECK(x.rows() == 20000);
  CHECK(x.cols() == 3);
  CHECK((x.array().abs() <= 100.0).all());
  CHECK(std::abs(moments(x.col(2)).mean) < 2.0);
  CHECK(prior_sample(t, 10, 8) == prior_sample(t, 10, 8));
}
