#pragma once

#include "gbs/estimators.hpp"
#include "gbs/flow.hpp"
#include "gbs/sampler.hpp"
#include "gbs/targets.hpp"

#include <cstdint>
#include <optional>

namespace gbs {

struct PipelineConfig {
  SamplerConfig sampler;
  FlowConfig flow;
  AllocationPolicy policy;
};

/// Halves chains, iterations and flow layers.
PipelineConfig lite(PipelineConfig cfg);

/// Seed for stage `stage` of a run seeded with `seed`.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage);

struct GbsDiagnostics {
  Allocation allocation;
  std::int64_t pilot_n_q = 0;
  double pilot_ln_z = 0.0;
};

/// Gaussianized bridge sampling on existing posterior draws: flow fit on the
/// first half of every chain, optimal bridge on the second half against
/// adaptively many flow draws.
EvidenceEstimate gbs_from_samples(const TargetDistribution& target, const SampleBatch& batch, const FlowConfig& flow,
                                  const AllocationPolicy& policy, std::uint64_t seed,
                                  GbsDiagnostics* diag = nullptr);

/// Pilot stage only: the proposal count GBS would use on these draws.
GbsDiagnostics gbs_allocation(const TargetDistribution& target, const SampleBatch& batch, const FlowConfig& flow,
                              const AllocationPolicy& policy, std::uint64_t seed);

/// Full pipeline: sample, then gbs_from_samples. Sampler and flow seeds derive from `seed`.
EvidenceEstimate gbs(const TargetDistribution& target, const PipelineConfig& cfg, std::uint64_t seed);
EvidenceEstimate gbsl(const TargetDistribution& target, const PipelineConfig& cfg, std::uint64_t seed);

/// Flow fit on all draws, importance sampling with `n_q` flow draws. Without
/// `n_q` the GBS allocation is computed first (its pilot draws are charged).
EvidenceEstimate gis_from_samples(const TargetDistribution& target, const SampleBatch& batch, const FlowConfig& flow,
                                  const AllocationPolicy& policy, std::uint64_t seed,
                                  std::optional<std::int64_t> n_q = std::nullopt);
EvidenceEstimate gis(const TargetDistribution& target, const PipelineConfig& cfg, std::uint64_t seed,
                     std::optional<std::int64_t> n_q = std::nullopt);

/// Flow fit on the first half, harmonic mean on the second half.
EvidenceEstimate ghm_from_samples(const TargetDistribution& target, const SampleBatch& batch, const FlowConfig& flow,
                                  std::uint64_t seed);
EvidenceEstimate ghm(const TargetDistribution& target, const PipelineConfig& cfg, std::uint64_t seed);

/// Warp bridge sampling: first half of each chain gives mean and covariance,
/// the second half is bridged against a standard normal in whitened space
/// using the symmetrized density 0.5 [p(mu + L u) + p(mu - L u)] |L|.
EvidenceEstimate warp_bridge(const SampleBatch& batch, const TargetDistribution& target, std::int64_t n_q,
                             std::uint64_t seed);
/// Full WBS run; `n_q` defaults to the GBS allocation on the same draws.
EvidenceEstimate wbs(const TargetDistribution& target, const PipelineConfig& cfg, std::uint64_t seed,
                     std::optional<std::int64_t> n_q = std::nullopt);

/// tau of a per-chain statistic laid out chain-major as in SampleBatch::stacked().
double chain_tau(const Vector& values, int n_chains);

}  // namespace gbs
