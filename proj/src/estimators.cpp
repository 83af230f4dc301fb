#include "gbs/estimators.hpp"

#include "gbs/math.hpp"

#include <array>
#include <cmath>

namespace gbs {

std::string to_string(Method m) {
  switch (m) {
    case Method::OBS: return "OBS";
    case Method::IS: return "IS";
    case Method::HM: return "HM";
    case Method::WBS: return "WBS";
    case Method::GBS: return "GBS";
    case Method::GBSL: return "GBSL";
    case Method::GIS: return "GIS";
    case Method::GHM: return "GHM";
    case Method::AIS: return "AIS";
    case Method::RAIS: return "RAIS";
  }
  return "?";
}

std::optional<Method> parse_method(const std::string& tag) {
  static const std::array<Method, 10> all{Method::OBS, Method::IS,  Method::HM,  Method::WBS, Method::GBS,
                                          Method::GBSL, Method::GIS, Method::GHM, Method::AIS, Method::RAIS};
  for (auto m : all) {
    const auto name = to_string(m);
    if (tag.size() != name.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < tag.size(); ++i) same = same && std::toupper(static_cast<unsigned char>(tag[i])) == name[i];
    if (same) return m;
  }
  return std::nullopt;
}

void BridgeInputs::validate() const {
  if (lnp_p.size() < 1 || lnq_p.size() != lnp_p.size())
    throw std::invalid_argument("bridge inputs: posterior-sample vectors must be non-empty and of equal length");
  if (lnp_q.size() < 1 || lnq_q.size() != lnp_q.size())
    throw std::invalid_argument("bridge inputs: proposal-sample vectors must be non-empty and of equal length");
  if (!lnp_p.allFinite() || !lnq_p.allFinite() || !lnq_q.allFinite())
    throw std::invalid_argument("bridge inputs: ln p at posterior samples and ln q everywhere must be finite");
  for (Eigen::Index i = 0; i < lnp_q.size(); ++i)
    if (std::isnan(lnp_q[i]) || lnp_q[i] == std::numeric_limits<double>::infinity())
      throw std::invalid_argument("bridge inputs: ln p at proposal samples must be finite or -inf");
}

double obs_score(const BridgeInputs& in, double ln_r) {
  const double ln_ratio = std::log(static_cast<double>(in.n_q())) - std::log(static_cast<double>(in.n_p()));
  double first = 0.0, second = 0.0;
  for (Eigen::Index i = 0; i < in.n_p(); ++i) first += sigmoid(ln_ratio + in.lnq_p[i] - in.lnp_p[i] + ln_r);
  for (Eigen::Index j = 0; j < in.n_q(); ++j) {
    if (in.lnp_q[j] == kNegInf) continue;
    second += sigmoid(-ln_ratio + in.lnp_q[j] - in.lnq_q[j] - ln_r);
  }
  return first - second;
}

double obs_solve(const BridgeInputs& in) {
  in.validate();
  if (!(in.lnp_q.array() > kNegInf).any())
    throw EstimationError("optimal bridge: no proposal sample has positive target density (no overlap)");

  // start from the importance-sampling guess, which shifts with ln p
  double guess = log_mean_exp((in.lnp_q - in.lnq_q).eval());
  if (!std::isfinite(guess)) guess = 0.0;

  double lo = guess, hi = guess;
  double s_lo = obs_score(in, lo), s_hi = s_lo;
  if (s_lo == 0.0) return guess;
  double step = 1.0;
  for (int i = 0; i < 64 && !(s_lo < 0.0 && s_hi > 0.0); ++i) {
    if (s_lo >= 0.0) {
      hi = lo;
      s_hi = s_lo;
      lo -= step;
      s_lo = obs_score(in, lo);
    } else {
      lo = hi;
      s_lo = s_hi;
      hi += step;
      s_hi = obs_score(in, hi);
    }
    step *= 2.0;
  }
  if (!(s_lo < 0.0 && s_hi > 0.0)) throw EstimationError("optimal bridge: score equation has no sign change");

  // secant steps inside the bracket; Illinois-style regula falsi when one end stalls
  int stalled_side = 0;
  for (int iter = 0; iter < 200; ++iter) {
    double x = hi - s_hi * (hi - lo) / (s_hi - s_lo);
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    const double s = obs_score(in, x);
    if (s == 0.0) return x;
    if (s < 0.0) {
      lo = x;
      s_lo = s;
      if (stalled_side == -1) s_hi *= 0.5;
      stalled_side = -1;
    } else {
      hi = x;
      s_hi = s;
      if (stalled_side == 1) s_lo *= 0.5;
      stalled_side = 1;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) break;
  }
  const double a = obs_score(in, lo), b = obs_score(in, hi);
  return std::abs(a) < std::abs(b) ? lo : hi;
}

namespace {

/// Var/E^2 of exp(log_values), computed without overflow.
double relative_variance(const Vector& log_values) {
  const double m = log_values.maxCoeff();
  if (m == kNegInf) return 0.0;
  const Vector v = (log_values.array() - m).exp().matrix();
  const auto mom = moments(v);
  if (!(mom.mean > 0.0)) return 0.0;
  return mom.variance / (mom.mean * mom.mean);
}

}  // namespace

Vector obs_log_f2(const BridgeInputs& in, double ln_r) {
  const double n = static_cast<double>(in.n_p() + in.n_q());
  const double ln_sp = std::log(static_cast<double>(in.n_p()) / n);
  const double ln_sq = std::log(static_cast<double>(in.n_q()) / n);
  Vector out(in.n_p());
  for (Eigen::Index i = 0; i < in.n_p(); ++i)
    out[i] = in.lnq_p[i] - log_add_exp(ln_sp + in.lnp_p[i] - ln_r, ln_sq + in.lnq_p[i]);
  return out;
}

ObsErrorTerms obs_error_terms(const BridgeInputs& in, double ln_r) {
  const double n = static_cast<double>(in.n_p() + in.n_q());
  const double ln_sp = std::log(static_cast<double>(in.n_p()) / n);
  const double ln_sq = std::log(static_cast<double>(in.n_q()) / n);
  Vector log_f1(in.n_q());
  for (Eigen::Index j = 0; j < in.n_q(); ++j) {
    const double lp = in.lnp_q[j] - ln_r;
    log_f1[j] = lp == kNegInf ? kNegInf : lp - log_add_exp(ln_sp + lp, ln_sq + in.lnq_q[j]);
  }
  ObsErrorTerms t;
  t.q_term = relative_variance(log_f1) / static_cast<double>(in.n_q());
  t.p_term_per_tau = relative_variance(obs_log_f2(in, ln_r)) / static_cast<double>(in.n_p());
  return t;
}

double obs_error(const BridgeInputs& in, double ln_r, double tau_f2) {
  return std::sqrt(obs_error_terms(in, ln_r).relative_mse(tau_f2));
}

EvidenceEstimate optimal_bridge(const BridgeInputs& in, double tau_f2) {
  EvidenceEstimate e;
  e.method = Method::OBS;
  e.ln_z = obs_solve(in);
  e.std_err = obs_error(in, e.ln_z, tau_f2);
  e.n_p = in.n_p();
  e.n_q = in.n_q();
  e.tau_f2 = tau_f2;
  return e;
}

EvidenceEstimate importance_sampling(const Vector& lnp_q, const Vector& lnq_q) {
  if (lnp_q.size() < 2 || lnq_q.size() != lnp_q.size())
    throw std::invalid_argument("importance sampling needs at least two proposal samples");
  const Vector log_w = lnp_q - lnq_q;
  const double ln_z = log_mean_exp(log_w);
  if (!std::isfinite(ln_z)) throw EstimationError("importance sampling: every weight is zero");
  EvidenceEstimate e;
  e.method = Method::IS;
  e.ln_z = ln_z;
  e.std_err = std::sqrt(relative_variance(log_w) / static_cast<double>(lnp_q.size()));
  e.n_q = lnp_q.size();
  return e;
}

EvidenceEstimate harmonic_mean(const Vector& lnp_p, const Vector& lnq_p, double tau) {
  if (lnp_p.size() < 2 || lnq_p.size() != lnp_p.size())
    throw std::invalid_argument("harmonic mean needs at least two posterior samples");
  const Vector log_v = lnq_p - lnp_p;
  const double lme = log_mean_exp(log_v);
  if (!std::isfinite(lme)) throw EstimationError("harmonic mean: every ratio q/p is zero");
  EvidenceEstimate e;
  e.method = Method::HM;
  e.ln_z = -lme;
  e.std_err = std::sqrt(tau * relative_variance(log_v) / static_cast<double>(lnp_p.size()));
  e.n_p = lnp_p.size();
  e.tau_f2 = tau;
  return e;
}

void AllocationPolicy::validate() const {
  if (!(f_err > 0.0 && f_err < 1.0)) throw std::invalid_argument("f_err must lie in (0, 1)");
  if (!(f_eva > 0.0 && f_eva < 1.0)) throw std::invalid_argument("f_eva must lie in (0, 1)");
  if (n_q0 && *n_q0 < 1) throw std::invalid_argument("n_q0 must be positive");
}

Allocation adaptive_nq(const ObsErrorTerms& pilot, double tau, std::int64_t n_q0, const AllocationPolicy& policy,
                       std::int64_t sampling_evals) {
  policy.validate();
  Allocation a;
  a.n_q = n_q0;
  const double p_term = tau * pilot.p_term_per_tau;
  if (!(p_term > 0.0)) {
    a.n_q_uncapped = static_cast<double>(n_q0);
    return a;
  }
  // q_term scales as 1/n_q: q(n) / (q(n) + p) = f_err
  const double wanted_q_term = policy.f_err / (1.0 - policy.f_err) * p_term;
  a.n_q_uncapped = static_cast<double>(n_q0) * pilot.q_term / wanted_q_term;
  double n_q = std::ceil(a.n_q_uncapped - 1e-9);
  const double cap = std::floor(policy.f_eva / (1.0 - policy.f_eva) * static_cast<double>(sampling_evals));
  if (n_q > cap) {
    n_q = cap;
    a.eva_cap_bound = true;
  }
  a.n_q = std::max(n_q0, static_cast<std::int64_t>(n_q));
  return a;
}

Allocation adaptive_nq(const BridgeInputs& pilot, double tau, const AllocationPolicy& policy,
                       std::int64_t sampling_evals) {
  const double ln_r = obs_solve(pilot);
  return adaptive_nq(obs_error_terms(pilot, ln_r), tau, pilot.n_q(), policy, sampling_evals);
}

}  // namespace gbs
