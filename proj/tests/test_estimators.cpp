#include "gbs/estimators.hpp"
#include "gbs/math.hpp"

#include <doctest.h>

#include <cmath>

using namespace gbs;

namespace {

// p is c * N(0, 1), q is N(mu, s^2); draws are exact.
BridgeInputs gaussian_inputs(int n_p, int n_q, double c, double mu, double s, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal;
  BridgeInputs in;
  in.lnp_p.resize(n_p);
  in.lnq_p.resize(n_p);
  in.lnp_q.resize(n_q);
  in.lnq_q.resize(n_q);
  for (int i = 0; i < n_p; ++i) {
    const double x = normal(rng);
    in.lnp_p[i] = c + normal_log_pdf(x, 0.0, 1.0);
    in.lnq_p[i] = normal_log_pdf(x, mu, s);
  }
  for (int j = 0; j < n_q; ++j) {
    const double x = mu + s * normal(rng);
    in.lnp_q[j] = c + normal_log_pdf(x, 0.0, 1.0);
    in.lnq_q[j] = normal_log_pdf(x, mu, s);
  }
  return in;
}

BridgeInputs swapped(const BridgeInputs& in) { return {in.lnq_q, in.lnp_q, in.lnq_p, in.lnp_p}; }

}  // namespace

TEST_CASE("method names") {
  CHECK(to_string(Method::GBSL) == "GBSL");
  CHECK(parse_method("rais") == Method::RAIS);
  CHECK(parse_method("Gbs") == Method::GBS);
  CHECK_FALSE(parse_method("gbsx").has_value());
}

TEST_CASE("proposal equal to the normalized target") {
  auto in = gaussian_inputs(300, 200, 0.0, 0.0, 1.0, 1);
  const auto e = optimal_bridge(in);
  CHECK(std::abs(e.ln_z) < 1e-12);
  CHECK(e.std_err < 1e-12);
}

TEST_CASE("constant density ratio is solved exactly") {
  // p = e^c q everywhere, with unequal sample sizes
  auto in = gaussian_inputs(500, 137, 0.0, 0.0, 1.0, 2);
  const double c = -42.7;
  in.lnp_p.array() += c;
  in.lnp_q.array() += c;
  CHECK(obs_solve(in) == doctest::Approx(c).epsilon(1e-12));
}

TEST_CASE("score is monotone in ln r") {
  const auto in = gaussian_inputs(400, 300, 3.0, 0.5, 1.5, 3);
  double prev = obs_score(in, -20.0);
  for (double r = -19.0; r <= 20.0; r += 0.5) {
    const double s = obs_score(in, r);
    CHECK(s >= prev);
    prev = s;
  }
  CHECK(obs_score(in, -50.0) < 0.0);
  CHECK(obs_score(in, 50.0) > 0.0);
}

TEST_CASE("shifting ln p shifts ln r") {
  auto in = gaussian_inputs(400, 300, 0.0, 0.5, 1.5, 4);
  const double base = obs_solve(in);
  const double base_err = obs_error(in, base, 1.0);
  in.lnp_p.array() += 123.0;
  in.lnp_q.array() += 123.0;
  const double shifted = obs_solve(in);
  CHECK(shifted - base == doctest::Approx(123.0).epsilon(1e-10));
  CHECK(obs_error(in, shifted, 1.0) == doctest::Approx(base_err).epsilon(1e-8));
}

TEST_CASE("swapping p and q negates ln r") {
  const auto in = gaussian_inputs(400, 250, 1.5, 0.7, 0.8, 5);
  CHECK(obs_solve(swapped(in)) == doctest::Approx(-obs_solve(in)).epsilon(1e-9));
}

TEST_CASE("Gaussian evidence and its error") {
  const double c = -7.3;
  const auto in = gaussian_inputs(4000, 4000, c, 0.4, 1.3, 6);
  const auto e = optimal_bridge(in);
  CHECK(std::abs(e.ln_z - c) < 3 * e.std_err);
  CHECK(e.std_err > 0.0);
  CHECK(e.std_err < 0.05);
  CHECK(obs_error(in, e.ln_z, 4.0) == doctest::Approx(std::sqrt(obs_error_terms(in, e.ln_z).relative_mse(4.0))));

  const auto is = importance_sampling(in.lnp_q, in.lnq_q);
  CHECK(std::abs(is.ln_z - c) < 4 * is.std_err);
  const auto hm = harmonic_mean(in.lnp_p, in.lnq_p);
  CHECK(std::abs(hm.ln_z - c) < 0.2);
  CHECK(harmonic_mean(in.lnp_p, in.lnq_p, 4.0).std_err == doctest::Approx(2 * hm.std_err));
}

TEST_CASE("bridge error is calibrated") {
  const double c = 2.0;
  int covered = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const auto e = optimal_bridge(gaussian_inputs(300, 300, c, 0.5, 1.4, 100 + r));
    if (std::abs(e.ln_z - c) <= 2 * e.std_err) ++covered;
  }
  const double rate = static_cast<double>(covered) / reps;
  CHECK(rate > 0.88);
  CHECK(rate < 0.995);
}

TEST_CASE("proposal draws outside the support") {
  auto in = gaussian_inputs(300, 300, 0.0, 0.0, 1.0, 7);
  for (int j = 0; j < 300; j += 3) in.lnp_q[j] = kNegInf;
  CHECK(std::isfinite(obs_solve(in)));
  in.lnp_q.setConstant(kNegInf);
  CHECK_THROWS_AS(obs_solve(in), EstimationError);
  CHECK_THROWS_AS(importance_sampling(in.lnp_q, in.lnq_q), EstimationError);
}

TEST_CASE("malformed inputs") {
  auto in = gaussian_inputs(10, 10, 0.0, 0.0, 1.0, 8);
  in.lnq_p.resize(9);
  CHECK_THROWS_AS(obs_solve(in), std::invalid_argument);
  in = gaussian_inputs(10, 10, 0.0, 0.0, 1.0, 8);
  in.lnp_p[0] = kNegInf;
  CHECK_THROWS_AS(obs_solve(in), std::invalid_argument);
}

TEST_CASE("adaptive proposal size") {
  AllocationPolicy policy;
  const ObsErrorTerms pilot{0.01, 0.009};
  // q_term must shrink to f_err / (1 - f_err) * p_term = 0.001, ten times smaller
  auto a = adaptive_nq(pilot, 1.0, 1000, policy, 1'000'000);
  CHECK(a.n_q == 10000);
  CHECK_FALSE(a.eva_cap_bound);
  const double share = (pilot.q_term * 1000 / a.n_q) / (pilot.q_term * 1000 / a.n_q + pilot.p_term_per_tau);
  CHECK(share == doctest::Approx(0.1));

  // a larger tau makes the p term dominate, so fewer q draws are needed
  CHECK(adaptive_nq(pilot, 4.0, 1000, policy, 1'000'000).n_q == 2500);

  // cap: n_q <= f_eva / (1 - f_eva) * sampling evals
  a = adaptive_nq(pilot, 1.0, 1000, policy, 45000);
  CHECK(a.n_q == 5000);
  CHECK(a.eva_cap_bound);
  CHECK(a.n_q_uncapped == doctest::Approx(10000));

  // never below the pilot size
  CHECK(adaptive_nq(ObsErrorTerms{1e-6, 0.01}, 1.0, 1000, policy, 1'000'000).n_q == 1000);

  policy.f_err = 1.0;
  CHECK_THROWS(adaptive_nq(pilot, 1.0, 1000, policy, 1000));
}

TEST_CASE("adaptive size from a pilot bridge") {
  const auto pilot = gaussian_inputs(2000, 2000, 0.0, 0.0, 3.0, 9);
  const auto a = adaptive_nq(pilot, 1.0, AllocationPolicy{}, 100'000'000);
  const auto terms = obs_error_terms(pilot, obs_solve(pilot));
  CHECK(a.n_q_uncapped == doctest::Approx(2000 * terms.q_term * 9 / terms.p_term_per_tau));
  // a wide proposal wastes q draws, so the allocation grows
  CHECK(a.n_q > 2000);
}
