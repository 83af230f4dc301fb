#pragma once

#include "gbs/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gbs {

enum class Method { OBS, IS, HM, WBS, GBS, GBSL, GIS, GHM, AIS, RAIS };

std::string to_string(Method m);
std::optional<Method> parse_method(const std::string& tag);

/// Log densities at the two sample sets of a bridge estimate. `lnp_q` may hold
/// -inf for proposal draws outside the prior support.
struct BridgeInputs {
  Vector lnp_p;
  Vector lnq_p;
  Vector lnp_q;
  Vector lnq_q;

  Eigen::Index n_p() const { return lnp_p.size(); }
  Eigen::Index n_q() const { return lnp_q.size(); }
  void validate() const;
};

struct EvidenceEstimate {
  Method method = Method::OBS;
  double ln_z = 0.0;
  double std_err = 0.0;  ///< of ln Z, Gaussian-error convention
  std::int64_t n_p = 0;
  std::int64_t n_q = 0;
  double tau_f2 = 1.0;
  EvalLedger evals;
  // annealing only
  std::vector<double> chain_log_weights;
  int failed_chains = 0;
  // allocation diagnostics (GBS family)
  bool eva_cap_bound = false;
};

/// Score S(ln r) of the optimal bridge equation; non-decreasing in ln r.
double obs_score(const BridgeInputs& in, double ln_r);

/// Root ln r of the optimal bridge score equation, solved in log space by a
/// bracketed secant iteration. Throws EstimationError without overlap.
double obs_solve(const BridgeInputs& in);

/// The two relative-error contributions of the optimal bridge estimator:
/// RE^2 = q_term + tau * p_term_per_tau.
struct ObsErrorTerms {
  double q_term = 0.0;
  double p_term_per_tau = 0.0;

  double relative_mse(double tau) const { return q_term + tau * p_term_per_tau; }
};
ObsErrorTerms obs_error_terms(const BridgeInputs& in, double ln_r);

/// sqrt(RE^2) as the standard error of ln Z.
double obs_error(const BridgeInputs& in, double ln_r, double tau_f2);

/// ln f2(x) = ln q - ln(s_p p' + s_q q) at the posterior samples, with p' = p / r.
Vector obs_log_f2(const BridgeInputs& in, double ln_r);

EvidenceEstimate importance_sampling(const Vector& lnp_q, const Vector& lnq_q);
EvidenceEstimate harmonic_mean(const Vector& lnp_p, const Vector& lnq_p, double tau = 1.0);

/// Bridge estimate on given inputs (no autocorrelation inflation unless tau given).
EvidenceEstimate optimal_bridge(const BridgeInputs& in, double tau_f2 = 1.0);

struct AllocationPolicy {
  double f_err = 0.1;
  double f_eva = 0.1;
  std::optional<std::int64_t> n_q0;  ///< pilot size; defaults to n_p

  void validate() const;
};

struct Allocation {
  std::int64_t n_q = 0;
  double n_q_uncapped = 0.0;
  bool eva_cap_bound = false;
};

/// Proposal sample size making the q share of RE^2 equal f_err, given pilot
/// error terms measured with `n_q0` draws. Never below n_q0; capped so q-draw
/// p-evaluations are at most f_eva of all p-evaluations.
Allocation adaptive_nq(const ObsErrorTerms& pilot, double tau, std::int64_t n_q0, const AllocationPolicy& policy,
                       std::int64_t sampling_evals);
Allocation adaptive_nq(const BridgeInputs& pilot, double tau, const AllocationPolicy& policy,
                       std::int64_t sampling_evals);

}  // namespace gbs
