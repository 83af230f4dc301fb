#pragma once

#include "gbs/estimators.hpp"
#include "gbs/targets.hpp"
#include "gbs/types.hpp"

#include <cstdint>
#include <vector>

namespace gbs {

/// Sigmoidal inverse-temperature ladder: logistic(delta (2t/(T-1) - 1)),
/// affinely rescaled so beta_0 = 0 and beta_{T-1} = 1.
struct AnnealSchedule {
  int T = 0;
  double delta = 4.0;
  Vector betas;
};

AnnealSchedule make_schedule(int T, double delta = 4.0);

enum class AnnealDirection { Forward, Reverse };

struct AnnealConfig {
  int T = 1000;
  double delta = 4.0;
  int chains = 16;
  int warmup_iters = 1000;  ///< split evenly: adaptation at beta = 0.5, then burn-in at the start temperature
  int max_tree_depth = 10;
  double target_accept = 0.8;

  void validate() const;
};

struct AnnealingRun {
  AnnealDirection direction = AnnealDirection::Forward;
  /// Per-chain ln Z estimates: ln w for AIS, -ln w_reverse for RAIS.
  std::vector<double> chain_estimates;
  std::vector<int> failed_chains;
  double adapted_step_size = 0.0;  ///< mean stage-1 step size
  EvalLedger evals;
};

/// Runs `cfg.chains` independent annealing chains with one NUTS transition
/// per intermediate temperature. The metric and step size adapted at
/// beta = 0.5 stay frozen afterwards.
AnnealingRun anneal(const TargetDistribution& target, const AnnealConfig& cfg, AnnealDirection direction,
                    std::uint64_t seed);

/// Mean of the chain estimates with std/sqrt(chains) as the error of the
/// stochastic bound (lower for AIS, upper for RAIS).
EvidenceEstimate summarize(const AnnealingRun& run);

EvidenceEstimate ais(const TargetDistribution& target, const AnnealConfig& cfg, std::uint64_t seed);
EvidenceEstimate rais(const TargetDistribution& target, const AnnealConfig& cfg, std::uint64_t seed);

}  // namespace gbs
