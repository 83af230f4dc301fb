#pragma once

#include "gbs/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace gbs {

/// Strictly increasing C1 map R -> R: monotone piecewise-cubic Hermite
/// interpolation through the knots with linear extrapolation outside them.
class MonotoneMap1D {
 public:
  /// Interior knot slopes follow Fritsch-Butland (weighted harmonic mean);
  /// end slopes equal the adjacent secant and continue into the linear tails.
  MonotoneMap1D(std::vector<double> knots_x, std::vector<double> knots_y);
  /// Rebuilds from stored slopes (deserialization).
  MonotoneMap1D(std::vector<double> knots_x, std::vector<double> knots_y, std::vector<double> slopes);

  static MonotoneMap1D affine(double slope, double intercept);

  double operator()(double x) const;
  double derivative(double x) const;
  double inverse(double y) const;
  /// ln of the derivative, floored at ln(kSlopeFloor).
  double log_derivative(double x) const;

  const std::vector<double>& knots_x() const { return xs_; }
  const std::vector<double>& knots_y() const { return ys_; }
  const std::vector<double>& slopes() const { return ds_; }

  static constexpr double kSlopeFloor = 1e-6;

 private:
  void validate() const;
  std::size_t interval(double x) const;

  std::vector<double> xs_, ys_, ds_;
};

/// u = R x followed by z_j = m_j(u_j).
struct FlowLayer {
  Matrix rotation;
  std::vector<MonotoneMap1D> marginals;
};

struct FlowConfig {
  int n_layers = 10;
  int n_knots = 64;
  int n_random_directions = 64;
  double bandwidth_factor = 1.0;  ///< multiplies sigma * n^(-1/5)
  int max_score_samples = 1000;   ///< subsample used to rank candidate directions
  int max_ascent_samples = 8000;  ///< subsample used to polish the chosen direction
  bool whiten = true;             ///< precede every Gaussianizing layer with an affine whitening layer
  int ascent_steps = 30;          ///< subgradient steps polishing each selected direction
  std::uint64_t seed = 0;
};

/// Normalized density q(x) = N(Psi(x); 0, I) |dPsi/dx| with Psi the layer
/// composition. Immutable once fitted.
class FlowModel {
 public:
  explicit FlowModel(Eigen::Index dim = 0) : dim_(dim) {}
  FlowModel(Eigen::Index dim, std::vector<FlowLayer> layers);

  Eigen::Index dim() const { return dim_; }
  const std::vector<FlowLayer>& layers() const { return layers_; }
  void add_layer(FlowLayer layer);

  /// z = Psi(x) and ln|dPsi/dx|.
  std::pair<Vector, double> forward(const Vector& x) const;
  Vector inverse(const Vector& z) const;
  double log_density(const Vector& x) const;

  /// Row-wise versions over an (n x dim) matrix.
  std::pair<Matrix, Vector> forward(const Matrix& xs) const;
  Matrix inverse(const Matrix& zs) const;
  Vector log_density(const Matrix& xs) const;

 private:
  Eigen::Index dim_;
  std::vector<FlowLayer> layers_;
};

/// Fits the iterative Gaussianizing flow to the rows of `samples`.
FlowModel fit_flow(const Matrix& samples, const FlowConfig& cfg);

/// Draws n points from q; `log_q` equals log_density at the returned rows.
struct FlowDraws {
  Matrix samples;
  Vector log_q;
};
FlowDraws flow_sample(const FlowModel& model, int n, std::uint64_t seed);

/// Fits the marginal Gaussianizing map of one coordinate: a variance-corrected
/// Gaussian KDE CDF pushed through the normal quantile at quantile knots.
MonotoneMap1D fit_marginal(const Vector& values, int n_knots, double bandwidth_factor);

/// Mean |sorted projection - normal quantile| for each column of `directions`.
/// Projections are not standardized, so scale and shift count as non-Gaussianity.
Vector wasserstein_nongaussianity(const Matrix& data, const Matrix& directions);

/// Orthogonal matrix whose rows are greedily chosen maximally non-Gaussian directions.
Matrix select_rotation(const Matrix& data, const FlowConfig& cfg, std::uint64_t stream);

}  // namespace gbs
