#pragma once

#include "gbs/targets.hpp"
#include "gbs/types.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace gbs {

struct SamplerConfig {
  int n_chains = 8;
  int n_iters = 2500;  ///< per chain, warm-up included
  double warmup_frac = 0.2;
  std::uint64_t seed = 0;
  int max_tree_depth = 10;
  double target_accept = 0.8;

  int warmup_iters() const;
  int draws_per_chain() const { return n_iters - warmup_iters(); }
  void validate() const;
};

/// ln p_beta(x) = ln pi(x) + beta ln L(x), pi the normalized flat prior.
struct TemperedTarget {
  const TargetDistribution& base;
  double beta = 1.0;

  double log_density(const Vector& x) const {
    if (!base.in_support(x)) return kNegInf;
    return -base.log_prior_volume() + beta * base.log_likelihood(x);
  }
};

/// Post-warm-up draws. `samples[c]` is (draws x dim) for chain c.
struct SampleBatch {
  std::vector<Matrix> samples;
  std::vector<Vector> logp;    ///< tempered log density at each draw
  std::vector<Vector> loglik;  ///< ln L at each draw
  double beta = 1.0;
  double adapted_step_size = 0.0;  ///< mean over chains
  std::vector<double> chain_step_sizes;
  std::vector<Vector> chain_inv_mass;
  Vector adapted_mass_diag;  ///< mean over chains of the diagonal mass matrix (1 / metric variance)
  EvalLedger evals;
  std::int64_t divergences = 0;

  int n_chains() const { return static_cast<int>(samples.size()); }
  Eigen::Index draws_per_chain() const { return samples.empty() ? 0 : samples.front().rows(); }
  Eigen::Index total_draws() const { return n_chains() * draws_per_chain(); }
  Eigen::Index dim() const { return samples.empty() ? 0 : samples.front().cols(); }

  /// All draws stacked chain-major into one (total x dim) matrix.
  Matrix stacked() const;
  /// Rows [begin, end) of every chain, as a new batch (used for the two-way split).
  SampleBatch slice(Eigen::Index begin, Eigen::Index end) const;
};

/// Phase-space point: position, momentum and cached density/gradient.
struct PhasePoint {
  Vector q;
  Vector p;
  Vector grad;          ///< gradient of the tempered log density
  Vector grad_loglik;   ///< gradient of ln L
  double logp = kNegInf;
  double loglik = kNegInf;
};

/// Stan-style multinomial NUTS with a diagonal metric. One instance per chain.
class NutsKernel {
 public:
  NutsKernel(const TargetDistribution& target, double beta, Vector inv_mass, double step_size,
             int max_tree_depth);

  struct TransitionInfo {
    double accept_stat = 0.0;
    int n_leapfrog = 0;
    int depth = 0;
    bool divergent = false;  ///< energy error beyond threshold at an in-support point
    bool hit_boundary = false;
  };

  /// Evaluates density and gradient at `pt.q`; -inf outside support.
  void evaluate(PhasePoint& pt);
  /// Initializes the chain state. Throws if the point has non-finite density.
  void set_state(const Vector& q);
  TransitionInfo transition(std::mt19937_64& rng);
  /// Leapfrog step of size `eps` (sign included).
  void leapfrog(PhasePoint& pt, double eps);
  double hamiltonian(const PhasePoint& pt) const;

  /// Stan's heuristic: double/halve step size until one-step acceptance crosses 0.8.
  void init_step_size(std::mt19937_64& rng);

  const PhasePoint& state() const { return state_; }
  double step_size() const { return step_size_; }
  void set_step_size(double eps) { step_size_ = eps; }
  const Vector& inv_mass() const { return inv_mass_; }
  void set_inv_mass(Vector m) { inv_mass_ = std::move(m); }
  /// Changes the temperature; the current state is rescored from its cached likelihood.
  void set_beta(double beta);
  double beta() const { return beta_; }
  const EvalLedger& evals() const { return evals_; }

 private:
  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, Vector& p_sharp_beg,
                  Vector& p_sharp_end, Vector& rho, Vector& p_beg, Vector& p_end, double h0,
                  double sign, int& n_leapfrog, double& log_sum_weight, double& sum_metro_prob,
                  bool& divergent, bool& boundary, std::mt19937_64& rng);
  void sample_momentum(PhasePoint& pt, std::mt19937_64& rng) const;

  const TargetDistribution& target_;
  double beta_;
  Vector inv_mass_;
  double step_size_;
  int max_depth_;
  PhasePoint state_;
  EvalLedger evals_;
};

/// Dual-averaging step size adaptation (Nesterov / Hoffman-Gelman constants).
class DualAveraging {
 public:
  explicit DualAveraging(double target_accept = 0.8) : delta_(target_accept) {}
  void restart(double step_size);
  double update(double accept_stat);
  double final_step_size() const { return std::exp(x_bar_); }

 private:
  double delta_;
  double mu_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
  int counter_ = 0;
  static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;
};

/// Adaptation output for a single chain.
struct ChainState {
  Vector position;
  double step_size = 0.0;
  Vector inv_mass;
};

/// Runs NUTS with windowed warm-up (step size by dual averaging, diagonal
/// metric from the second half of warm-up). `beta` tempers the likelihood.
SampleBatch sample(const TargetDistribution& target, const SamplerConfig& cfg, double beta = 1.0);
inline SampleBatch sample(const TemperedTarget& tempered, const SamplerConfig& cfg) {
  return sample(tempered.base, cfg, tempered.beta);
}

/// Warm-up only, returning the final chain state. Used by annealing.
ChainState warmup_chain(const TargetDistribution& target, double beta, int iters, double target_accept,
                        int max_tree_depth, std::mt19937_64& rng, EvalLedger& evals,
                        std::optional<Vector> init = std::nullopt);

/// Default initial point: uniform(-2, 2) clipped into the prior box.
Vector initial_point(const TargetDistribution& target, std::mt19937_64& rng);

/// n i.i.d. uniform draws from the prior box, as an (n x dim) matrix.
Matrix prior_sample(const TargetDistribution& target, int n, std::uint64_t seed);

}  // namespace gbs
