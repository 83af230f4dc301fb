#include "gbs/pipelines.hpp"

#include "gbs/diagnostics.hpp"
#include "gbs/math.hpp"

#include <cmath>

namespace gbs {

PipelineConfig lite(PipelineConfig cfg) {
  cfg.sampler.n_chains = std::max(1, cfg.sampler.n_chains / 2);
  cfg.sampler.n_iters = std::max(2, cfg.sampler.n_iters / 2);
  cfg.flow.n_layers = std::max(1, cfg.flow.n_layers / 2);
  return cfg;
}

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  auto rng = make_rng(seed, 0x57a6e, stage);
  return rng();
}

namespace {

enum Stage : std::uint64_t { kSampler = 1, kFlow = 2, kPilot = 3, kExtra = 4, kWarp = 5 };

Vector concat(const std::vector<Vector>& parts) {
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.size();
  Vector out(n);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

Vector log_posterior_rows(const TargetDistribution& target, const Matrix& xs) {
  Vector out(xs.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) out[i] = target.log_posterior(xs.row(i).transpose());
  return out;
}

struct Halves {
  SampleBatch fit;
  SampleBatch eval;
};

Halves split(const SampleBatch& batch) {
  const Eigen::Index half = batch.draws_per_chain() / 2;
  if (half < 1) throw std::invalid_argument("too few draws per chain to split into two batches");
  return {batch.slice(0, half), batch.slice(half, 2 * half)};
}

FlowConfig seeded(FlowConfig flow, std::uint64_t seed) {
  flow.seed = stage_seed(seed, kFlow);
  return flow;
}

SamplerConfig seeded(SamplerConfig s, std::uint64_t seed) {
  s.seed = stage_seed(seed, kSampler);
  return s;
}

}  // namespace

double chain_tau(const Vector& values, int n_chains) {
  const Eigen::Index len = values.size() / n_chains;
  std::vector<Vector> chains;
  for (int c = 0; c < n_chains; ++c) chains.push_back(values.segment(c * len, len));
  if (len < 50) return 1.0;
  return integrated_autocorr_time(chains).tau;
}

namespace {

Vector scaled_exp(const Vector& log_values) {
  const double m = log_values.maxCoeff();
  return (log_values.array() - m).exp().matrix();
}

/// Flow fit on the first half, bridge inputs with the pilot proposal draws,
/// and the resulting allocation.
struct PilotStage {
  FlowModel model;
  SampleBatch eval;
  BridgeInputs inputs;
  double ln_r = 0.0;
  double tau = 1.0;
  Allocation allocation;
};

PilotStage run_pilot(const TargetDistribution& target, const SampleBatch& batch, const FlowConfig& flow,
                     const AllocationPolicy& policy, std::uint64_t seed) {
  policy.validate();
  auto halves = split(batch);
  PilotStage st{fit_flow(halves.fit.stacked(), seeded(flow, seed)), std::move(halves.eval), {}, 0.0, 1.0, {}};
  auto& in = st.inputs;
  in.lnp_p = concat(st.eval.logp);
  in.lnq_p = st.model.log_density(st.eval.stacked());
  const std::int64_t n_q0 = policy.n_q0.value_or(in.lnp_p.size());
  auto pilot = flow_sample(st.model, static_cast<int>(n_q0), stage_seed(seed, kPilot));
  in.lnq_q = pilot.log_q;
  in.lnp_q = log_posterior_rows(target, pilot.samples);
  st.ln_r = obs_solve(in);
  st.tau = chain_tau(scaled_exp(obs_log_f2(in, st.ln_r)), st.eval.n_chains());
  st.allocation = adaptive_nq(obs_error_terms(in, st.ln_r), st.tau, n_q0, policy, batch.evals.likelihood);
  return st;
}

}  // namespace

GbsDiagnostics gbs_allocation(const TargetDistribution& target, const SampleBatch& batch, const FlowConfig& flow,
                              const AllocationPolicy& policy, std::uint64_t seed) {
  const auto st = run_pilot(target, batch, flow, policy, seed);
  return {st.allocation, st.inputs.n_q(), st.ln_r};
}

EvidenceEstimate gbs_from_samples(const TargetDistribution& target, const SampleBatch& batch, const FlowConfig& flow,
                                  const AllocationPolicy& policy, std::uint64_t seed, GbsDiagnostics* diag) {
  auto st = run_pilot(target, batch, flow, policy, seed);
  auto& in = st.inputs;
  const std::int64_t n_q0 = in.n_q();
  if (diag) *diag = {st.allocation, n_q0, st.ln_r};

  if (st.allocation.n_q > n_q0) {
    // pilot draws are reused; only the difference is drawn
    auto extra = flow_sample(st.model, static_cast<int>(st.allocation.n_q - n_q0), stage_seed(seed, kExtra));
    Vector lnp_q(st.allocation.n_q), lnq_q(st.allocation.n_q);
    lnp_q << in.lnp_q, log_posterior_rows(target, extra.samples);
    lnq_q << in.lnq_q, extra.log_q;
    in.lnp_q = std::move(lnp_q);
    in.lnq_q = std::move(lnq_q);
    st.ln_r = obs_solve(in);
    st.tau = chain_tau(scaled_exp(obs_log_f2(in, st.ln_r)), st.eval.n_chains());
  }

  EvidenceEstimate e;
  e.method = Method::GBS;
  e.ln_z = st.ln_r;
  e.std_err = obs_error(in, st.ln_r, st.tau);
  e.n_p = in.n_p();
  e.n_q = in.n_q();
  e.tau_f2 = st.tau;
  e.evals = batch.evals + EvalLedger{in.n_q(), 0};
  e.eva_cap_bound = st.allocation.eva_cap_bound;
  return e;
}

EvidenceEstimate gbs(const TargetDistribution& target, const PipelineConfig& cfg, std::uint64_t seed) {
  const auto batch = sample(target, seeded(cfg.sampler, seed));
  return gbs_from_samples(target, batch, cfg.flow, cfg.policy, seed);
}

EvidenceEstimate gbsl(const TargetDistribution& target, const PipelineConfig& cfg, std::uint64_t seed) {
  auto e = gbs(target, lite(cfg), seed);
  e.method = Method::GBSL;
  return e;
}

EvidenceEstimate gis_from_samples(const TargetDistribution& target, const SampleBatch& batch, const FlowConfig& flow,
                                  const AllocationPolicy& policy, std::uint64_t seed, std::optional<std::int64_t> n_q) {
  EvalLedger extra{0, 0};
  if (!n_q) {
    const auto diag = gbs_allocation(target, batch, flow, policy, seed);
    n_q = diag.allocation.n_q;
    extra.likelihood += diag.pilot_n_q;
  }
  const FlowModel model = fit_flow(batch.stacked(), seeded(flow, seed));
  auto draws = flow_sample(model, static_cast<int>(*n_q), stage_seed(seed, kExtra));
  auto e = importance_sampling(log_posterior_rows(target, draws.samples), draws.log_q);
  e.method = Method::GIS;
  e.evals = batch.evals + extra + EvalLedger{*n_q, 0};
  return e;
}

EvidenceEstimate gis(const TargetDistribution& target, const PipelineConfig& cfg, std::uint64_t seed,
                     std::optional<std::int64_t> n_q) {
  const auto batch = sample(target, seeded(cfg.sampler, seed));
  return gis_from_samples(target, batch, cfg.flow, cfg.policy, seed, n_q);
}

EvidenceEstimate ghm_from_samples(const TargetDistribution& target, const SampleBatch& batch, const FlowConfig& flow,
                                  std::uint64_t seed) {
  (void)target;
  const auto halves = split(batch);
  const FlowModel model = fit_flow(halves.fit.stacked(), seeded(flow, seed));
  const Vector lnp = concat(halves.eval.logp);
  const Vector lnq = model.log_density(halves.eval.stacked());
  const double tau = chain_tau(scaled_exp(lnq - lnp), halves.eval.n_chains());
  auto e = harmonic_mean(lnp, lnq, tau);
  e.method = Method::GHM;
  e.evals = batch.evals;
  return e;
}

EvidenceEstimate ghm(const TargetDistribution& target, const PipelineConfig& cfg, std::uint64_t seed) {
  const auto batch = sample(target, seeded(cfg.sampler, seed));
  return ghm_from_samples(target, batch, cfg.flow, seed);
}

EvidenceEstimate warp_bridge(const SampleBatch& batch, const TargetDistribution& target, std::int64_t n_q,
                             std::uint64_t seed) {
  if (n_q < 1) throw std::invalid_argument("warp bridge needs n_q >= 1");
  const auto halves = split(batch);
  const Matrix fit = halves.fit.stacked();
  const Eigen::Index d = fit.cols();
  if (fit.rows() < d + 1) throw std::invalid_argument("warp bridge needs more posterior draws than dimensions");

  const Vector mu = fit.colwise().mean().transpose();
  const Matrix centered = fit.rowwise() - mu.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(fit.rows() - 1);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw EstimationError("warp bridge: posterior sample covariance is singular");
  const Matrix chol = llt.matrixL();
  const double log_det_chol = chol.diagonal().array().log().sum();

  auto warped_log_density = [&](const Vector& u, double lnp_plus) {
    const Vector offset = chol * u;
    const double lnp_minus = target.log_posterior(mu - offset);
    return log_det_chol + log_add_exp(lnp_plus, lnp_minus) - std::log(2.0);
  };
  auto std_normal_log_density = [d](const Vector& u) { return -0.5 * (static_cast<double>(d) * kLn2Pi + u.squaredNorm()); };

  const Matrix eval = halves.eval.stacked();
  const Vector lnp_eval = concat(halves.eval.logp);
  BridgeInputs in;
  in.lnp_p.resize(eval.rows());
  in.lnq_p.resize(eval.rows());
  for (Eigen::Index i = 0; i < eval.rows(); ++i) {
    const Vector u = chol.triangularView<Eigen::Lower>().solve((eval.row(i).transpose() - mu).eval());
    in.lnp_p[i] = warped_log_density(u, lnp_eval[i]);
    in.lnq_p[i] = std_normal_log_density(u);
  }
  auto rng = make_rng(stage_seed(seed, kWarp));
  in.lnp_q.resize(n_q);
  in.lnq_q.resize(n_q);
  for (std::int64_t j = 0; j < n_q; ++j) {
    const Vector u = standard_normal_vector(rng, d);
    in.lnp_q[j] = warped_log_density(u, target.log_posterior(mu + chol * u));
    in.lnq_q[j] = std_normal_log_density(u);
  }

  const double ln_r = obs_solve(in);
  const double tau = chain_tau(scaled_exp(obs_log_f2(in, ln_r)), halves.eval.n_chains());
  EvidenceEstimate e;
  e.method = Method::WBS;
  e.ln_z = ln_r;
  e.std_err = obs_error(in, ln_r, tau);
  e.n_p = in.n_p();
  e.n_q = n_q;
  e.tau_f2 = tau;
  e.evals = batch.evals + EvalLedger{in.n_p() + 2 * n_q, 0};
  return e;
}

EvidenceEstimate wbs(const TargetDistribution& target, const PipelineConfig& cfg, std::uint64_t seed,
                     std::optional<std::int64_t> n_q) {
  const auto batch = sample(target, seeded(cfg.sampler, seed));
  EvalLedger extra{0, 0};
  if (!n_q) {
    const auto diag = gbs_allocation(target, batch, cfg.flow, cfg.policy, seed);
    n_q = diag.allocation.n_q;
    extra.likelihood += diag.pilot_n_q;
  }
  auto e = warp_bridge(batch, target, *n_q, seed);
  e.evals += extra;
  return e;
}

}  // namespace gbs
