#include "gbs/math.hpp"
#include "gbs/pipelines.hpp"

#include <doctest.h>

#include <cmath>

using namespace gbs;

namespace {

// Normalized N(mu, S) likelihood in 4-d inside [-20, 20]^4: ln Z = -4 ln 40.
TargetDistribution correlated_gaussian() {
  Matrix s(4, 4);
  s << 2.0, 0.9, 0.0, 0.3,
       0.9, 1.0, 0.2, 0.0,
       0.0, 0.2, 0.5, 0.1,
       0.3, 0.0, 0.1, 1.5;
  const Matrix prec = s.inverse();
  const double log_det = std::log(s.determinant());
  Vector mu(4);
  mu << 1.0, -0.5, 0.0, 2.0;
  auto fn = [prec, log_det, mu](const Vector& x, Vector* grad) {
    const Vector d = x - mu;
    const Vector pd = prec * d;
    if (grad) *grad = -pd;
    return -0.5 * d.dot(pd) - 0.5 * log_det - 2.0 * kLn2Pi;
  };
  return TargetDistribution("corr4", Vector::Constant(4, -20.0), Vector::Constant(4, 20.0), fn);
}

PipelineConfig small_pipeline() {
  PipelineConfig cfg;
  cfg.sampler.n_chains = 4;
  cfg.sampler.n_iters = 1500;
  cfg.flow.n_layers = 3;
  return cfg;
}

}  // namespace

TEST_CASE("stage seeds and lite configs") {
  CHECK(stage_seed(1, 1) == stage_seed(1, 1));
  CHECK(stage_seed(1, 1) != stage_seed(1, 2));
  CHECK(stage_seed(1, 1) != stage_seed(2, 1));
  const auto l = lite(small_pipeline());
  CHECK(l.sampler.n_chains == 2);
  CHECK(l.sampler.n_iters == 750);
  CHECK(l.flow.n_layers == 1);
}

TEST_CASE("chain tau of independent draws") {
  auto rng = make_rng(3);
  const Vector v = standard_normal_vector(rng, 4000);
  CHECK(chain_tau(v, 4) == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("warp bridge is exact for a Gaussian") {
  const auto t = correlated_gaussian();
  const double truth = -4 * std::log(40.0);
  const auto e = wbs(t, small_pipeline(), 1);
  CHECK(e.method == Method::WBS);
  CHECK(std::abs(e.ln_z - truth) < 3 * e.std_err + 1e-3);
  CHECK(e.std_err < 0.02);
  CHECK(e.n_q > 0);
  CHECK(e.evals.likelihood > e.evals.gradient);
}

TEST_CASE("Gaussianized estimators on a small target") {
  const auto t = correlated_gaussian();
  const double truth = -4 * std::log(40.0);
  const auto cfg = small_pipeline();
  const auto batch = sample(t, cfg.sampler);

  GbsDiagnostics diag;
  const auto g = gbs_from_samples(t, batch, cfg.flow, cfg.policy, 5, &diag);
  CHECK(g.method == Method::GBS);
  CHECK(std::abs(g.ln_z - truth) < 3 * g.std_err);
  CHECK(g.std_err < 0.05);
  CHECK(g.n_p == batch.total_draws() / 2);
  CHECK(g.n_q == diag.allocation.n_q);
  CHECK(g.n_q >= diag.pilot_n_q);
  CHECK(g.evals.likelihood == batch.evals.likelihood + g.n_q);
  CHECK(g.evals.gradient == batch.evals.gradient);
  CHECK(g.tau_f2 >= 1.0);

  const auto again = gbs_from_samples(t, batch, cfg.flow, cfg.policy, 5);
  CHECK(again.ln_z == g.ln_z);

  const auto is = gis_from_samples(t, batch, cfg.flow, cfg.policy, 5);
  CHECK(is.method == Method::GIS);
  CHECK(std::abs(is.ln_z - truth) < 3 * is.std_err + 0.02);

  const auto hm = ghm_from_samples(t, batch, cfg.flow, 5);
  CHECK(hm.method == Method::GHM);
  CHECK(std::abs(hm.ln_z - truth) < 0.2);
}

TEST_CASE("full GBS on a low-dimensional funnel") {
  const auto t = make_funnel(4);
  const double truth = -std::log(8.0) - 3 * std::log(60.0);
  const auto e = gbs::gbs(t, small_pipeline(), 7);
  CHECK(std::abs(e.ln_z - truth) < 3 * e.std_err + 0.01);
  const auto l = gbsl(t, small_pipeline(), 7);
  CHECK(l.method == Method::GBSL);
  CHECK(l.evals.gradient < e.evals.gradient);
  CHECK(std::abs(l.ln_z - truth) < 3 * l.std_err + 0.01);
}
