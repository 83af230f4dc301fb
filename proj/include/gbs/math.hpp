#pragma once

#include "gbs/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace gbs {

inline constexpr double kLn2Pi = 1.8378770664093454836;

/// ln(exp(a) + exp(b)) with -inf handled.
inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  if (v.size() == 0) return kNegInf;
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  if (!std::isfinite(m)) return m;
  return m + std::log((v.derived().array() - m).exp().sum());
}

template <typename Derived>
double log_mean_exp(const Eigen::DenseBase<Derived>& v) {
  return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

/// Logistic sigmoid, stable for large |x|.
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double normal_cdf(double x);
double normal_quantile(double p);

inline double normal_log_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * (kLn2Pi + z * z) - std::log(sd);
}

/// Population mean and variance (1/n normalization).
struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

template <typename Derived>
Moments moments(const Eigen::DenseBase<Derived>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = v.derived().array().sum() / n;
  const double var = (v.derived().array() - mean).square().sum() / n;
  return {mean, var};
}

/// Linear-interpolation quantile of unsorted data (numpy default convention).
double quantile(std::vector<double> values, double level);

/// Deterministic RNG stream for (seed, stream, substream).
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0);

Vector standard_normal_vector(std::mt19937_64& rng, Eigen::Index n);

}  // namespace gbs
