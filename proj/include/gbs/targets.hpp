#pragma once

#include "gbs/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gbs {

/// Log-likelihood callback. When `grad` is non-null it receives the gradient.
using LogLikelihoodFn = std::function<double(const Vector& x, Vector* grad)>;

/// A posterior with a box-shaped flat prior. The log density is
///   ln p(x) = ln L(x) - ln V,   V = prod(upper - lower),
/// inside the box and -inf outside, so the evidence is Z = E_prior[L].
/// Immutable after construction.
class TargetDistribution {
 public:
  TargetDistribution(std::string name, Vector lower, Vector upper, LogLikelihoodFn log_likelihood,
                     std::optional<double> fiducial_ln_z = std::nullopt);

  const std::string& name() const { return name_; }
  Eigen::Index dim() const { return lower_.size(); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  double log_prior_volume() const { return log_volume_; }
  std::optional<double> fiducial_ln_z() const { return fiducial_; }

  /// Rotation matrix for targets that carry one (Banana); empty otherwise.
  const Matrix& rotation() const { return rotation_; }
  void set_rotation(Matrix a) { rotation_ = std::move(a); }

  bool in_support(const Vector& x) const;

  double log_likelihood(const Vector& x) const;
  double log_likelihood(const Vector& x, Vector& grad) const;

  double log_posterior(const Vector& x) const;
  Vector grad_log_posterior(const Vector& x) const;

 private:
  void check_dim(const Vector& x) const;

  std::string name_;
  Vector lower_;
  Vector upper_;
  double log_volume_ = 0.0;
  LogLikelihoodFn loglik_;
  std::optional<double> fiducial_;
  Matrix rotation_;
};

// Built-in benchmarks.
TargetDistribution make_funnel(int n = 16, double a = 1.0, double b = 0.5);
TargetDistribution make_banana(int n = 32, double q = 0.01, std::uint64_t rotation_seed = 2019);
TargetDistribution make_banana(const Matrix& rotation, double q = 0.01);
TargetDistribution make_cauchy(int n = 48, double mu = 5.0, double sigma = 1.0);
/// Cyclic ring of pairwise terms ((x_i^2 + x_{i+1}^2 - a)^2 / b)^(power/2).
/// power = 2 reproduces the reference ln Z of -114.492; power = 4 is the
/// doubly squared variant, whose exact ln Z is -110.797.
TargetDistribution make_ring(int n = 64, double a = 2.0, double b = 1.0, int power = 2);

/// Uniformly random element of SO(n): QR of a Gaussian matrix with the sign
/// of R's diagonal absorbed into Q, then one column flipped if det < 0.
Matrix random_rotation(int n, std::uint64_t seed);

/// Looks up "funnel16", "banana32", "cauchy48" or "ring64".
std::optional<TargetDistribution> make_target(const std::string& name);
std::vector<std::string> target_names();

/// Published reference ln Z for a built-in target name.
std::optional<double> fiducial_ln_z(const std::string& name);

}  // namespace gbs
