#include "gbs/annealing.hpp"

#include "gbs/math.hpp"
#include "gbs/parallel.hpp"
#include "gbs/sampler.hpp"

#include <cmath>
#include <iostream>

namespace gbs {

AnnealSchedule make_schedule(int T, double delta) {
  if (T < 2) throw std::invalid_argument("annealing schedule needs T >= 2");
  if (!(delta > 0.0)) throw std::invalid_argument("annealing schedule needs delta > 0");
  AnnealSchedule s{T, delta, Vector(T)};
  const double first = sigmoid(-delta), last = sigmoid(delta);
  for (int t = 0; t < T; ++t) {
    const double raw = sigmoid(delta * (2.0 * t / (T - 1) - 1.0));
    s.betas[t] = (raw - first) / (last - first);
  }
  s.betas[0] = 0.0;
  s.betas[T - 1] = 1.0;
  return s;
}

void AnnealConfig::validate() const {
  if (T < 2) throw std::invalid_argument("annealing needs T >= 2");
  if (chains < 2) throw std::invalid_argument("annealing needs at least two chains");
  if (warmup_iters < 2) throw std::invalid_argument("annealing needs at least two warm-up iterations");
}

AnnealingRun anneal(const TargetDistribution& target, const AnnealConfig& cfg, AnnealDirection direction,
                    std::uint64_t seed) {
  cfg.validate();
  const auto schedule = make_schedule(cfg.T, cfg.delta);
  const Vector& betas = schedule.betas;
  const bool forward = direction == AnnealDirection::Forward;

  AnnealingRun run;
  run.direction = direction;
  run.chain_estimates.assign(static_cast<std::size_t>(cfg.chains), 0.0);
  std::vector<EvalLedger> ledgers(static_cast<std::size_t>(cfg.chains));
  std::vector<double> steps(static_cast<std::size_t>(cfg.chains));

  parallel_for(cfg.chains, [&](int c) {
    auto rng = make_rng(seed, forward ? 0xa15 : 0x4a15, static_cast<std::uint64_t>(c));
    EvalLedger evals;
    const int stage1 = cfg.warmup_iters / 2;
    const int stage2 = cfg.warmup_iters - stage1;
    const auto adapted = warmup_chain(target, 0.5, stage1, cfg.target_accept, cfg.max_tree_depth, rng, evals);

    NutsKernel kernel(target, forward ? 0.0 : 1.0, adapted.inv_mass, adapted.step_size, cfg.max_tree_depth);
    kernel.set_state(adapted.position);
    for (int i = 0; i < stage2; ++i) kernel.transition(rng);

    double log_w = 0.0;
    if (forward) {
      for (int t = 1; t < cfg.T; ++t) {
        log_w += (betas[t] - betas[t - 1]) * kernel.state().loglik;
        if (t + 1 < cfg.T) {
          kernel.set_beta(betas[t]);
          kernel.transition(rng);
        }
      }
    } else {
      for (int t = cfg.T - 1; t >= 1; --t) {
        log_w += (betas[t - 1] - betas[t]) * kernel.state().loglik;
        if (t > 1) {
          kernel.set_beta(betas[t - 1]);
          kernel.transition(rng);
        }
      }
      log_w = -log_w;
    }
    run.chain_estimates[static_cast<std::size_t>(c)] = log_w;
    steps[static_cast<std::size_t>(c)] = adapted.step_size;
    ledgers[static_cast<std::size_t>(c)] = evals + kernel.evals();
  });

  for (int c = 0; c < cfg.chains; ++c) {
    run.evals += ledgers[static_cast<std::size_t>(c)];
    run.adapted_step_size += steps[static_cast<std::size_t>(c)] / cfg.chains;
    if (!std::isfinite(run.chain_estimates[static_cast<std::size_t>(c)])) run.failed_chains.push_back(c);
  }
  if (!run.failed_chains.empty())
    std::cerr << "warning: " << run.failed_chains.size() << " annealing chain(s) produced non-finite weights and were excluded\n";
  return run;
}

EvidenceEstimate summarize(const AnnealingRun& run) {
  std::vector<double> ok;
  for (double v : run.chain_estimates)
    if (std::isfinite(v)) ok.push_back(v);
  if (ok.empty()) throw EstimationError("annealing: every chain produced a non-finite weight");
  EvidenceEstimate e;
  e.method = run.direction == AnnealDirection::Forward ? Method::AIS : Method::RAIS;
  const Vector v = Eigen::Map<const Vector>(ok.data(), static_cast<Eigen::Index>(ok.size()));
  const double n = static_cast<double>(ok.size());
  e.ln_z = v.mean();
  e.std_err = ok.size() > 1 ? std::sqrt((v.array() - e.ln_z).square().sum() / (n - 1.0) / n) : 0.0;
  e.chain_log_weights = run.chain_estimates;
  e.failed_chains = static_cast<int>(run.failed_chains.size());
  e.evals = run.evals;
  return e;
}

EvidenceEstimate ais(const TargetDistribution& target, const AnnealConfig& cfg, std::uint64_t seed) {
  return summarize(anneal(target, cfg, AnnealDirection::Forward, seed));
}

EvidenceEstimate rais(const TargetDistribution& target, const AnnealConfig& cfg, std::uint64_t seed) {
  return summarize(anneal(target, cfg, AnnealDirection::Reverse, seed));
}

}  // namespace gbs
