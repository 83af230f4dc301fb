#include "gbs/annealing.hpp"
#include "gbs/math.hpp"

#include <doctest.h>

#include <cmath>

using namespace gbs;

namespace {

TargetDistribution constant_likelihood(double c) {
  auto fn = [c](const Vector& x, Vector* grad) {
    if (grad) grad->setZero(x.size());
    return c;
  };
  return TargetDistribution("flat", Vector::Constant(2, -1.0), Vector::Constant(2, 3.0), fn);
}

// N(0.5, 2^2) likelihood inside [-10, 10]: ln Z = -ln 20.
TargetDistribution broad_gaussian() {
  auto fn = [](const Vector& x, Vector* grad) {
    if (grad) (*grad)[0] = -(x[0] - 0.5) / 4.0;
    return normal_log_pdf(x[0], 0.5, 2.0);
  };
  return TargetDistribution("broad", Vector::Constant(1, -10.0), Vector::Constant(1, 10.0), fn);
}

AnnealConfig config(int T, int chains) {
  AnnealConfig cfg;
  cfg.T = T;
  cfg.chains = chains;
  cfg.warmup_iters = 300;
  return cfg;
}

}  // namespace

TEST_CASE("sigmoidal schedule") {
  for (int T : {2, 3, 5, 800}) {
    const auto s = make_schedule(T);
    CHECK(s.betas.size() == T);
    CHECK(s.betas[0] == 0.0);
    CHECK(s.betas[T - 1] == 1.0);
    for (int t = 1; t < T; ++t) CHECK(s.betas[t] > s.betas[t - 1]);
    // symmetric about the midpoint
    for (int t = 0; t < T; ++t) CHECK(s.betas[t] + s.betas[T - 1 - t] == doctest::Approx(1.0));
  }
  CHECK(make_schedule(3).betas[1] == doctest::Approx(0.5));
  // steps are smallest near the ends
  const auto s = make_schedule(101);
  CHECK(s.betas[1] - s.betas[0] < s.betas[51] - s.betas[50]);
  CHECK_THROWS(make_schedule(1));
  CHECK_THROWS(make_schedule(10, 0.0));
}

TEST_CASE("constant likelihood gives its value exactly") {
  const auto t = constant_likelihood(-3.25);
  for (auto dir : {AnnealDirection::Forward, AnnealDirection::Reverse}) {
    const auto run = anneal(t, config(20, 4), dir, 1);
    CHECK(run.failed_chains.empty());
    for (double w : run.chain_estimates) CHECK(w == doctest::Approx(-3.25).epsilon(1e-12));
    const auto e = summarize(run);
    CHECK(e.ln_z == doctest::Approx(-3.25));
    CHECK(e.std_err == doctest::Approx(0.0).scale(1.0));
    CHECK(e.method == (dir == AnnealDirection::Forward ? Method::AIS : Method::RAIS));
  }
}

TEST_CASE("long ladders converge on a 1-d Gaussian") {
  const auto t = broad_gaussian();
  const double truth = -std::log(20.0);
  const auto a = ais(t, config(300, 16), 2);
  const auto r = rais(t, config(300, 16), 3);
  CHECK(std::abs(a.ln_z - truth) < 0.25);
  CHECK(std::abs(r.ln_z - truth) < 0.25);
  CHECK(a.chain_log_weights.size() == 16);
  CHECK(a.evals.gradient > 300 * 16);
}

TEST_CASE("short ladders bracket the evidence") {
  const auto t = make_funnel(4);
  const double truth = -std::log(8.0) - 3 * std::log(60.0);
  const auto a = ais(t, config(15, 16), 4);
  const auto r = rais(t, config(15, 16), 5);
  CHECK(a.ln_z < truth + 2 * a.std_err);
  CHECK(r.ln_z > truth - 2 * r.std_err);
  CHECK(a.ln_z < r.ln_z);
}

TEST_CASE("annealing is reproducible") {
  const auto t = broad_gaussian();
  const auto a = anneal(t, config(30, 3), AnnealDirection::Forward, 9);
  const auto b = anneal(t, config(30, 3), AnnealDirection::Forward, 9);
  CHECK(a.chain_estimates == b.chain_estimates);
  CHECK(a.evals == b.evals);
  AnnealConfig bad = config(30, 1);
  CHECK_THROWS(bad.validate());
}
