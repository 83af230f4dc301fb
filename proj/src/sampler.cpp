#include "gbs/sampler.hpp"

#include "gbs/math.hpp"
#include "gbs/parallel.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace gbs {

namespace {

constexpr double kMaxDeltaH = 1000.0;

bool no_u_turn(const Vector& p_sharp_minus, const Vector& p_sharp_plus, const Vector& rho) {
  return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
}

std::string format_point(const Vector& x) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << "]";
  return os.str();
}

}  // namespace

int SamplerConfig::warmup_iters() const {
  return static_cast<int>(std::lround(warmup_frac * n_iters));
}

void SamplerConfig::validate() const {
  if (n_chains < 1) throw std::invalid_argument("n_chains must be positive");
  if (n_iters < 2) throw std::invalid_argument("n_iters must be at least 2");
  if (!(warmup_frac > 0.0 && warmup_frac < 1.0)) throw std::invalid_argument("warmup_frac must lie in (0, 1)");
  if (max_tree_depth < 1) throw std::invalid_argument("max_tree_depth must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw std::invalid_argument("target_accept must lie in (0, 1)");
  if (draws_per_chain() < 1) throw std::invalid_argument("no draws remain after warm-up");
}

Matrix SampleBatch::stacked() const {
  Matrix out(total_draws(), dim());
  Eigen::Index row = 0;
  for (const auto& chain : samples) {
    out.middleRows(row, chain.rows()) = chain;
    row += chain.rows();
  }
  return out;
}

SampleBatch SampleBatch::slice(Eigen::Index begin, Eigen::Index end) const {
  SampleBatch out = *this;
  const Eigen::Index len = end - begin;
  for (std::size_t c = 0; c < samples.size(); ++c) {
    out.samples[c] = samples[c].middleRows(begin, len);
    out.logp[c] = logp[c].segment(begin, len);
    out.loglik[c] = loglik[c].segment(begin, len);
  }
  return out;
}

NutsKernel::NutsKernel(const TargetDistribution& target, double beta, Vector inv_mass, double step_size,
                       int max_tree_depth)
    : target_(target), beta_(beta), inv_mass_(std::move(inv_mass)), step_size_(step_size), max_depth_(max_tree_depth) {}

void NutsKernel::set_beta(double beta) {
  beta_ = beta;
  if (state_.q.size() == 0 || !std::isfinite(state_.loglik)) return;
  state_.logp = -target_.log_prior_volume() + beta_ * state_.loglik;
  state_.grad = beta_ * state_.grad_loglik;
}

void NutsKernel::evaluate(PhasePoint& pt) {
  if (!target_.in_support(pt.q)) {
    pt.logp = kNegInf;
    pt.loglik = kNegInf;
    pt.grad.setZero(pt.q.size());
    pt.grad_loglik.setZero(pt.q.size());
    return;
  }
  pt.loglik = target_.log_likelihood(pt.q, pt.grad_loglik);
  ++evals_.likelihood;
  ++evals_.gradient;
  if (!std::isfinite(pt.loglik)) {
    // a likelihood of zero inside the box behaves like the boundary
    pt.logp = kNegInf;
    pt.grad.setZero(pt.q.size());
    return;
  }
  if (!pt.grad_loglik.allFinite())
    throw SamplerError("non-finite gradient of '" + target_.name() + "' at " + format_point(pt.q));
  pt.logp = -target_.log_prior_volume() + beta_ * pt.loglik;
  pt.grad = beta_ * pt.grad_loglik;
}

void NutsKernel::set_state(const Vector& q) {
  state_.q = q;
  state_.p = Vector::Zero(q.size());
  evaluate(state_);
  if (!std::isfinite(state_.logp))
    throw SamplerError("initial point has non-finite log density: " + format_point(q));
}

double NutsKernel::hamiltonian(const PhasePoint& pt) const {
  if (!std::isfinite(pt.logp)) return std::numeric_limits<double>::infinity();
  return -pt.logp + 0.5 * (pt.p.array().square() * inv_mass_.array()).sum();
}

void NutsKernel::sample_momentum(PhasePoint& pt, std::mt19937_64& rng) const {
  pt.p = standard_normal_vector(rng, pt.q.size()).cwiseQuotient(inv_mass_.cwiseSqrt());
}

void NutsKernel::leapfrog(PhasePoint& pt, double eps) {
  pt.p += 0.5 * eps * pt.grad;
  pt.q += eps * inv_mass_.cwiseProduct(pt.p);
  evaluate(pt);
  pt.p += 0.5 * eps * pt.grad;
}

bool NutsKernel::build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, Vector& p_sharp_beg,
                            Vector& p_sharp_end, Vector& rho, Vector& p_beg, Vector& p_end, double h0,
                            double sign, int& n_leapfrog, double& log_sum_weight, double& sum_metro_prob,
                            bool& divergent, bool& boundary, std::mt19937_64& rng) {
  if (depth == 0) {
    leapfrog(z, sign * step_size_);
    ++n_leapfrog;
    double h = hamiltonian(z);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    bool bad = false;
    if (!std::isfinite(z.logp)) {
      boundary = true;
      bad = true;
    } else if (h - h0 > kMaxDeltaH) {
      divergent = true;
      bad = true;
    }
    log_sum_weight = log_add_exp(log_sum_weight, h0 - h);
    sum_metro_prob += (h0 - h > 0) ? 1.0 : std::exp(h0 - h);
    z_propose = z;
    p_sharp_beg = inv_mass_.cwiseProduct(z.p);
    p_sharp_end = p_sharp_beg;
    rho += z.p;
    p_beg = z.p;
    p_end = p_beg;
    return !bad;
  }

  const Eigen::Index n = z.q.size();
  Vector rho_init = Vector::Zero(n);
  Vector p_init_end(n), p_sharp_init_end(n);
  double lsw_init = kNegInf;
  if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, h0, sign,
                  n_leapfrog, lsw_init, sum_metro_prob, divergent, boundary, rng))
    return false;

  PhasePoint z_propose_final = z;
  Vector rho_final = Vector::Zero(n);
  Vector p_final_beg(n), p_sharp_final_beg(n);
  double lsw_final = kNegInf;
  if (!build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, h0,
                  sign, n_leapfrog, lsw_final, sum_metro_prob, divergent, boundary, rng))
    return false;

  const double lsw_subtree = log_add_exp(lsw_init, lsw_final);
  log_sum_weight = log_add_exp(log_sum_weight, lsw_subtree);
  if (lsw_final > lsw_subtree) {
    z_propose = z_propose_final;
  } else {
    std::uniform_real_distribution<double> unif;
    if (unif(rng) < std::exp(lsw_final - lsw_subtree)) z_propose = z_propose_final;
  }

  const Vector rho_subtree = rho_init + rho_final;
  rho += rho_subtree;
  bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
  persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
  persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
  return persist;
}

NutsKernel::TransitionInfo NutsKernel::transition(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif;
  PhasePoint z = state_;
  sample_momentum(z, rng);

  PhasePoint z_fwd = z, z_bwd = z, z_sample = z, z_propose = z;
  const Vector p_sharp0 = inv_mass_.cwiseProduct(z.p);
  Vector p_fwd_fwd = z.p, p_sharp_fwd_fwd = p_sharp0;
  Vector p_fwd_bwd = z.p, p_sharp_fwd_bwd = p_sharp0;
  Vector p_bwd_fwd = z.p, p_sharp_bwd_fwd = p_sharp0;
  Vector p_bwd_bwd = z.p, p_sharp_bwd_bwd = p_sharp0;
  Vector rho = z.p;

  double log_sum_weight = 0.0;
  const double h0 = hamiltonian(z);
  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  TransitionInfo info;
  const Eigen::Index n = z.q.size();

  while (info.depth < max_depth_) {
    Vector rho_fwd = Vector::Zero(n), rho_bwd = Vector::Zero(n);
    double lsw_subtree = kNegInf;
    bool valid = false;
    if (unif(rng) > 0.5) {
      rho_bwd = rho;
      p_bwd_fwd = p_fwd_fwd;
      p_sharp_bwd_fwd = p_sharp_fwd_fwd;
      z = z_fwd;
      valid = build_tree(info.depth, z, z_propose, p_sharp_fwd_bwd, p_sharp_fwd_fwd, rho_fwd, p_fwd_bwd, p_fwd_fwd,
                         h0, 1.0, n_leapfrog, lsw_subtree, sum_metro_prob, info.divergent, info.hit_boundary, rng);
      z_fwd = z;
    } else {
      rho_fwd = rho;
      p_fwd_bwd = p_bwd_bwd;
      p_sharp_fwd_bwd = p_sharp_bwd_bwd;
      z = z_bwd;
      valid = build_tree(info.depth, z, z_propose, p_sharp_bwd_fwd, p_sharp_bwd_bwd, rho_bwd, p_bwd_fwd, p_bwd_bwd,
                         h0, -1.0, n_leapfrog, lsw_subtree, sum_metro_prob, info.divergent, info.hit_boundary, rng);
      z_bwd = z;
    }
    if (!valid) break;
    ++info.depth;

    if (lsw_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (unif(rng) < std::exp(lsw_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_add_exp(log_sum_weight, lsw_subtree);

    rho = rho_bwd + rho_fwd;
    bool persist = no_u_turn(p_sharp_bwd_bwd, p_sharp_fwd_fwd, rho);
    persist = persist && no_u_turn(p_sharp_bwd_bwd, p_sharp_fwd_bwd, rho_bwd + p_fwd_bwd);
    persist = persist && no_u_turn(p_sharp_bwd_fwd, p_sharp_fwd_fwd, rho_fwd + p_bwd_fwd);
    if (!persist) break;
  }

  info.n_leapfrog = n_leapfrog;
  info.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
  state_ = z_sample;
  return info;
}

void NutsKernel::init_step_size(std::mt19937_64& rng) {
  const PhasePoint start = state_;
  auto one_step = [&] {
    PhasePoint z = start;
    sample_momentum(z, rng);
    const double h0 = hamiltonian(z);
    leapfrog(z, step_size_);
    double h = hamiltonian(z);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    return h0 - h;
  };
  const double log_target = std::log(0.8);
  const int direction = one_step() > log_target ? 1 : -1;
  for (int guard = 0; guard < 200; ++guard) {
    const double delta_h = one_step();
    if (direction == 1 && !(delta_h > log_target)) break;
    if (direction == -1 && !(delta_h < log_target)) break;
    step_size_ = direction == 1 ? 2.0 * step_size_ : 0.5 * step_size_;
    if (step_size_ > 1e7) throw SamplerError("step size diverged during initialization; posterior may be improper");
    if (step_size_ < 1e-300) throw SamplerError("step size collapsed to zero during initialization");
  }
}

void DualAveraging::restart(double step_size) {
  mu_ = std::log(10.0 * step_size);
  s_bar_ = 0.0;
  x_bar_ = 0.0;
  counter_ = 0;
}

double DualAveraging::update(double accept_stat) {
  accept_stat = std::min(1.0, accept_stat);
  ++counter_;
  const double eta = 1.0 / (counter_ + kT0);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(static_cast<double>(counter_)) / kGamma;
  const double x_eta = std::pow(static_cast<double>(counter_), -kKappa);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

Vector initial_point(const TargetDistribution& target, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  Vector x(target.dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double lo = target.lower()[i], hi = target.upper()[i];
    const double margin = 1e-3 * (hi - lo);
    x[i] = std::clamp(unif(rng), lo + margin, hi - margin);
  }
  return x;
}

namespace {

/// Stan-style regularized variance estimate for the diagonal metric.
Vector regularized_variance(const std::vector<Vector>& draws) {
  const auto n = static_cast<double>(draws.size());
  const Eigen::Index d = draws.front().size();
  Vector mean = Vector::Zero(d), m2 = Vector::Zero(d);
  for (const auto& x : draws) mean += x;
  mean /= n;
  for (const auto& x : draws) m2 += (x - mean).array().square().matrix();
  Vector var = m2 / std::max(1.0, n - 1.0);
  return (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
}

struct ChainWarmup {
  NutsKernel* kernel;
  std::mt19937_64* rng;
  DualAveraging da;
  std::vector<Vector> collected;
  std::int64_t divergences = 0;
};

void advance(ChainWarmup& cw, int count, bool collect) {
  for (int it = 0; it < count; ++it) {
    const auto info = cw.kernel->transition(*cw.rng);
    if (info.divergent) ++cw.divergences;
    cw.kernel->set_step_size(cw.da.update(info.accept_stat));
    if (collect) cw.collected.push_back(cw.kernel->state().q);
  }
}

/// Windowed warm-up run in lockstep over chains:
///   init buffer | metric window 1 | metric window 2 | term buffer.
/// At each window end every chain re-estimates its diagonal metric from its own
/// window draws, then step size search and dual averaging restart.
void adapt_chains(std::vector<ChainWarmup>& chains, int iters) {
  const int nc = static_cast<int>(chains.size());
  parallel_for(nc, [&](int c) {
    auto& cw = chains[static_cast<std::size_t>(c)];
    cw.kernel->init_step_size(*cw.rng);
    cw.da.restart(cw.kernel->step_size());
  });

  const bool windowed = iters >= 40;
  const int init_buffer = static_cast<int>(0.15 * iters);
  // the final step size gets at least 50 dual-averaging updates when warm-up allows
  const int term_buffer = std::max(static_cast<int>(0.10 * iters), std::min(50, static_cast<int>(0.2 * iters)));
  const int window = (iters - init_buffer - term_buffer) / 2;
  const int end_first = init_buffer + window;
  const int end_second = iters - term_buffer;

  auto run_phase = [&](int count, bool collect) {
    parallel_for(nc, [&](int c) { advance(chains[static_cast<std::size_t>(c)], count, collect); });
  };
  auto update_metric = [&] {
    parallel_for(nc, [&](int c) {
      auto& cw = chains[static_cast<std::size_t>(c)];
      cw.kernel->set_inv_mass(regularized_variance(cw.collected));
      cw.collected.clear();
      cw.kernel->init_step_size(*cw.rng);
      cw.da.restart(cw.kernel->step_size());
    });
  };

  if (windowed) {
    run_phase(init_buffer, false);
    run_phase(window, true);
    update_metric();
    run_phase(end_second - end_first, true);
    update_metric();
    run_phase(term_buffer, false);
  } else {
    run_phase(iters, false);
  }
  for (auto& cw : chains) cw.kernel->set_step_size(cw.da.final_step_size());
}

}  // namespace

ChainState warmup_chain(const TargetDistribution& target, double beta, int iters, double target_accept,
                        int max_tree_depth, std::mt19937_64& rng, EvalLedger& evals, std::optional<Vector> init) {
  NutsKernel kernel(target, beta, Vector::Ones(target.dim()), 1.0, max_tree_depth);
  kernel.set_state(init ? *init : initial_point(target, rng));
  std::vector<ChainWarmup> chains{{&kernel, &rng, DualAveraging(target_accept), {}, 0}};
  adapt_chains(chains, iters);
  evals += kernel.evals();
  return {kernel.state().q, kernel.step_size(), kernel.inv_mass()};
}

SampleBatch sample(const TargetDistribution& target, const SamplerConfig& cfg, double beta) {
  cfg.validate();
  const int warmup = cfg.warmup_iters();
  const int draws = cfg.draws_per_chain();
  if (warmup < 100)
    std::cerr << "warning: " << warmup << " warm-up iterations is below the 100 needed for reliable adaptation\n";

  SampleBatch batch;
  batch.beta = beta;
  const auto nc = static_cast<std::size_t>(cfg.n_chains);
  batch.samples.resize(nc);
  batch.logp.resize(nc);
  batch.loglik.resize(nc);
  batch.chain_step_sizes.resize(nc);
  batch.chain_inv_mass.resize(nc);
  std::vector<EvalLedger> ledgers(nc);
  std::vector<std::int64_t> divergences(nc, 0);

  std::vector<std::mt19937_64> rngs;
  std::vector<NutsKernel> kernels;
  rngs.reserve(nc);
  kernels.reserve(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    rngs.push_back(make_rng(cfg.seed, 0x5a3b1e, c));
    kernels.emplace_back(target, beta, Vector::Ones(target.dim()), 1.0, cfg.max_tree_depth);
    kernels.back().set_state(initial_point(target, rngs.back()));
  }
  std::vector<ChainWarmup> chains;
  for (std::size_t c = 0; c < nc; ++c) chains.push_back({&kernels[c], &rngs[c], DualAveraging(cfg.target_accept), {}, 0});
  adapt_chains(chains, warmup);
  for (std::size_t c = 0; c < nc; ++c) {
    if (chains[c].divergences > warmup / 2) {
      std::ostringstream os;
      os << "chain " << c << " of '" << target.name() << "': " << chains[c].divergences << " of " << warmup
         << " warm-up transitions diverged";
      throw SamplerError(os.str());
    }
  }

  parallel_for(cfg.n_chains, [&](int ci) {
    const auto c = static_cast<std::size_t>(ci);
    auto& kernel = kernels[c];
    auto& rng = rngs[c];
    Matrix xs(draws, target.dim());
    Vector lp(draws), ll(draws);
    std::int64_t div = chains[c].divergences;
    for (int i = 0; i < draws; ++i) {
      const auto info = kernel.transition(rng);
      if (info.divergent) ++div;
      xs.row(i) = kernel.state().q.transpose();
      lp[i] = kernel.state().logp;
      ll[i] = kernel.state().loglik;
    }
    batch.samples[c] = std::move(xs);
    batch.logp[c] = std::move(lp);
    batch.loglik[c] = std::move(ll);
    batch.chain_step_sizes[c] = kernel.step_size();
    batch.chain_inv_mass[c] = kernel.inv_mass();
    ledgers[c] = kernel.evals();
    divergences[c] = div;
  });

  batch.adapted_mass_diag = Vector::Zero(target.dim());
  for (std::size_t c = 0; c < nc; ++c) {
    batch.evals += ledgers[c];
    batch.divergences += divergences[c];
    batch.adapted_step_size += batch.chain_step_sizes[c] / static_cast<double>(nc);
    batch.adapted_mass_diag += batch.chain_inv_mass[c].cwiseInverse() / static_cast<double>(nc);
  }
  return batch;
}

Matrix prior_sample(const TargetDistribution& target, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("prior_sample needs n >= 1");
  auto rng = make_rng(seed, 0x9e10);
  std::uniform_real_distribution<double> unif;
  Matrix out(n, target.dim());
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < target.dim(); ++j)
      out(i, j) = target.lower()[j] + unif(rng) * (target.upper()[j] - target.lower()[j]);
  return out;
}

}  // namespace gbs
