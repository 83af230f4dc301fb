#include "gbs/flow.hpp"

#include "gbs/math.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace gbs {

// ---------------------------------------------------------------- MonotoneMap1D

MonotoneMap1D::MonotoneMap1D(std::vector<double> knots_x, std::vector<double> knots_y)
    : xs_(std::move(knots_x)), ys_(std::move(knots_y)) {
  validate();
  const std::size_t k = xs_.size();
  std::vector<double> h(k - 1), delta(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    h[i] = xs_[i + 1] - xs_[i];
    delta[i] = (ys_[i + 1] - ys_[i]) / h[i];
  }
  ds_.assign(k, 0.0);
  ds_.front() = delta.front();
  ds_.back() = delta.back();
  for (std::size_t i = 1; i + 1 < k; ++i) {
    const double w1 = 2.0 * h[i] + h[i - 1];
    const double w2 = h[i] + 2.0 * h[i - 1];
    ds_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
  }
  for (auto& d : ds_) d = std::max(d, kSlopeFloor);
}

MonotoneMap1D::MonotoneMap1D(std::vector<double> knots_x, std::vector<double> knots_y, std::vector<double> slopes)
    : xs_(std::move(knots_x)), ys_(std::move(knots_y)), ds_(std::move(slopes)) {
  validate();
  if (ds_.size() != xs_.size()) throw std::invalid_argument("monotone map: slope count differs from knot count");
  for (double d : ds_)
    if (!(d > 0.0)) throw std::invalid_argument("monotone map: slopes must be positive");
}

MonotoneMap1D MonotoneMap1D::affine(double slope, double intercept) {
  if (!(slope > 0.0)) throw std::invalid_argument("affine monotone map needs a positive slope");
  return MonotoneMap1D({0.0, 1.0}, {intercept, intercept + slope});
}

void MonotoneMap1D::validate() const {
  if (xs_.size() < 2 || xs_.size() != ys_.size())
    throw std::invalid_argument("monotone map needs at least two knots with matching x and y");
  for (std::size_t i = 1; i < xs_.size(); ++i) {
    if (!(xs_[i] > xs_[i - 1]) || !(ys_[i] > ys_[i - 1]))
      throw std::invalid_argument("monotone map knots must be strictly increasing");
  }
}

std::size_t MonotoneMap1D::interval(double x) const {
  const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  const auto i = static_cast<std::size_t>(std::distance(xs_.begin(), it));
  return std::clamp<std::size_t>(i, 1, xs_.size() - 1) - 1;
}

namespace {

struct Hermite {
  double x0, h, y0, y1, d0, d1;

  double value(double t) const {
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1;
  }
  double slope(double t) const {
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * h * d0 + (-6 * t2 + 6 * t) * y1 +
            (3 * t2 - 2 * t) * h * d1) /
           h;
  }
};

}  // namespace

double MonotoneMap1D::operator()(double x) const {
  if (x <= xs_.front()) return ys_.front() + ds_.front() * (x - xs_.front());
  if (x >= xs_.back()) return ys_.back() + ds_.back() * (x - xs_.back());
  const auto i = interval(x);
  const Hermite seg{xs_[i], xs_[i + 1] - xs_[i], ys_[i], ys_[i + 1], ds_[i], ds_[i + 1]};
  return seg.value((x - seg.x0) / seg.h);
}

double MonotoneMap1D::derivative(double x) const {
  if (x <= xs_.front()) return ds_.front();
  if (x >= xs_.back()) return ds_.back();
  const auto i = interval(x);
  const Hermite seg{xs_[i], xs_[i + 1] - xs_[i], ys_[i], ys_[i + 1], ds_[i], ds_[i + 1]};
  return seg.slope((x - seg.x0) / seg.h);
}

double MonotoneMap1D::log_derivative(double x) const { return std::log(std::max(derivative(x), kSlopeFloor)); }

double MonotoneMap1D::inverse(double y) const {
  if (y <= ys_.front()) return xs_.front() + (y - ys_.front()) / ds_.front();
  if (y >= ys_.back()) return xs_.back() + (y - ys_.back()) / ds_.back();
  const auto it = std::upper_bound(ys_.begin(), ys_.end(), y);
  const auto i = std::clamp<std::size_t>(static_cast<std::size_t>(std::distance(ys_.begin(), it)), 1, ys_.size() - 1) - 1;
  const Hermite seg{xs_[i], xs_[i + 1] - xs_[i], ys_[i], ys_[i + 1], ds_[i], ds_[i + 1]};
  // safeguarded Newton on t in [0, 1]; the segment is monotone
  double lo = 0.0, hi = 1.0;
  double t = (y - seg.y0) / (seg.y1 - seg.y0);
  for (int iter = 0; iter < 100; ++iter) {
    const double f = seg.value(t) - y;
    if (f == 0.0) break;
    if (f < 0) lo = t; else hi = t;
    const double dfdt = seg.slope(t) * seg.h;
    double next = dfdt > 0 ? t - f / dfdt : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) < 1e-15) {
      t = next;
      break;
    }
    t = next;
  }
  return seg.x0 + t * seg.h;
}

// ---------------------------------------------------------------- FlowModel

FlowModel::FlowModel(Eigen::Index dim, std::vector<FlowLayer> layers) : dim_(dim) {
  for (auto& l : layers) add_layer(std::move(l));
}

void FlowModel::add_layer(FlowLayer layer) {
  if (layer.rotation.rows() != dim_ || layer.rotation.cols() != dim_ ||
      static_cast<Eigen::Index>(layer.marginals.size()) != dim_)
    throw std::invalid_argument("flow layer shape does not match flow dimension");
  layers_.push_back(std::move(layer));
}

std::pair<Vector, double> FlowModel::forward(const Vector& x) const {
  if (x.size() != dim_) throw std::invalid_argument("flow forward: dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("flow forward: non-finite input");
  Vector z = x;
  double log_det = 0.0;
  for (const auto& layer : layers_) {
    Vector u = layer.rotation * z;
    for (Eigen::Index j = 0; j < dim_; ++j) {
      const auto& m = layer.marginals[static_cast<std::size_t>(j)];
      log_det += m.log_derivative(u[j]);
      u[j] = m(u[j]);
    }
    z = std::move(u);
  }
  return {z, log_det};
}

Vector FlowModel::inverse(const Vector& z) const {
  if (z.size() != dim_) throw std::invalid_argument("flow inverse: dimension mismatch");
  Vector x = z;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    for (Eigen::Index j = 0; j < dim_; ++j) x[j] = it->marginals[static_cast<std::size_t>(j)].inverse(x[j]);
    x = it->rotation.transpose() * x;
  }
  return x;
}

double FlowModel::log_density(const Vector& x) const {
  const auto [z, log_det] = forward(x);
  return -0.5 * (static_cast<double>(dim_) * kLn2Pi + z.squaredNorm()) + log_det;
}

std::pair<Matrix, Vector> FlowModel::forward(const Matrix& xs) const {
  if (xs.cols() != dim_) throw std::invalid_argument("flow forward: dimension mismatch");
  if (!xs.allFinite()) throw std::invalid_argument("flow forward: non-finite input");
  Matrix z = xs;
  Vector log_det = Vector::Zero(xs.rows());
  for (const auto& layer : layers_) {
    Matrix u = z * layer.rotation.transpose();
    for (Eigen::Index j = 0; j < dim_; ++j) {
      const auto& m = layer.marginals[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < u.rows(); ++i) {
        log_det[i] += m.log_derivative(u(i, j));
        u(i, j) = m(u(i, j));
      }
    }
    z = std::move(u);
  }
  return {z, log_det};
}

Matrix FlowModel::inverse(const Matrix& zs) const {
  if (zs.cols() != dim_) throw std::invalid_argument("flow inverse: dimension mismatch");
  Matrix x = zs;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    for (Eigen::Index j = 0; j < dim_; ++j) {
      const auto& m = it->marginals[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = m.inverse(x(i, j));
    }
    x = x * it->rotation;
  }
  return x;
}

Vector FlowModel::log_density(const Matrix& xs) const {
  const auto [z, log_det] = forward(xs);
  return (-0.5 * (static_cast<double>(dim_) * kLn2Pi + z.rowwise().squaredNorm().array())).matrix() + log_det;
}

// ---------------------------------------------------------------- fitting

namespace {

double sorted_quantile(const std::vector<double>& s, double level) {
  const double pos = level * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

/// Lower and upper tail mass of a Gaussian KDE with sorted centers.
struct KdeCdf {
  const std::vector<double>& centers;
  double bandwidth;

  std::pair<double, double> tails(double x) const {
    const double reach = 8.0 * bandwidth;
    const auto lo = std::lower_bound(centers.begin(), centers.end(), x - reach);
    const auto hi = std::upper_bound(centers.begin(), centers.end(), x + reach);
    const auto n = static_cast<double>(centers.size());
    double below = static_cast<double>(std::distance(centers.begin(), lo));
    double above = static_cast<double>(std::distance(hi, centers.end()));
    for (auto it = lo; it != hi; ++it) {
      const double t = (x - *it) / bandwidth;
      below += normal_cdf(t);
      above += normal_cdf(-t);
    }
    return {below / n, above / n};
  }
};

}  // namespace

MonotoneMap1D fit_marginal(const Vector& values, int n_knots, double bandwidth_factor) {
  const auto n = static_cast<std::size_t>(values.size());
  if (n < 5) throw FlowFitError("marginal fit needs at least 5 samples");
  if (n_knots < 2) throw std::invalid_argument("marginal fit needs at least 2 knots");
  std::vector<double> s(values.data(), values.data() + values.size());
  std::sort(s.begin(), s.end());

  const auto mom = moments(values);
  const double sd = std::sqrt(mom.variance);
  const double iqr = sorted_quantile(s, 0.75) - sorted_quantile(s, 0.25);
  double scale = std::min(sd, iqr / 1.349);
  if (!(scale > 0.0)) scale = sd;
  if (!(scale > 0.0) || !std::isfinite(scale)) throw FlowFitError("marginal has zero variance");

  const double h = bandwidth_factor * scale * std::pow(static_cast<double>(n), -0.2);
  // variance-corrected KDE: shrink centers so the smoothed law keeps the sample variance
  const double shrink = 1.0 / std::sqrt(1.0 + h * h / mom.variance);
  std::vector<double> centers(n);
  for (std::size_t i = 0; i < n; ++i) centers[i] = mom.mean + shrink * (s[i] - mom.mean);
  const KdeCdf cdf{centers, h};

  const double z_max = std::max(1.0, normal_quantile(1.0 - 2.0 / static_cast<double>(n)));
  const double x_tol = 1e-10 * (s.back() - s.front());
  std::vector<double> kx, ky;
  kx.reserve(static_cast<std::size_t>(n_knots));
  ky.reserve(static_cast<std::size_t>(n_knots));
  for (int k = 0; k < n_knots; ++k) {
    const double zk = -z_max + 2.0 * z_max * k / (n_knots - 1);
    const double x = sorted_quantile(s, normal_cdf(zk));
    const auto [below, above] = cdf.tails(x);
    const double y = below < 0.5 ? normal_quantile(std::max(below, 1e-300)) : -normal_quantile(std::max(above, 1e-300));
    if (!std::isfinite(y)) continue;
    if (!kx.empty() && (x <= kx.back() + x_tol || y <= ky.back() + 1e-10)) continue;
    kx.push_back(x);
    ky.push_back(y);
  }
  if (kx.size() < 2) throw FlowFitError("marginal is degenerate: fewer than two distinct quantile knots");
  return MonotoneMap1D(std::move(kx), std::move(ky));
}

namespace {

const std::vector<double>& normal_scores(Eigen::Index m) {
  static thread_local std::vector<double> q;
  if (static_cast<Eigen::Index>(q.size()) != m) {
    q.resize(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) q[static_cast<std::size_t>(i)] = normal_quantile((i + 0.5) / m);
  }
  return q;
}

/// W1 between the projection of `data` on unit vector `v` and N(0,1), with its
/// subgradient in v (the sorting permutation held fixed).
double w1_with_gradient(const Matrix& data, const Vector& v, Vector& grad) {
  const Eigen::Index m = data.rows();
  const auto& zq = normal_scores(m);
  const Vector proj = data * v;
  static thread_local std::vector<std::pair<double, Eigen::Index>> order;
  order.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = {proj[i], i};
  std::sort(order.begin(), order.end());
  Vector sign(m);
  double w1 = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto [value, k] = order[static_cast<std::size_t>(i)];
    const double diff = value - zq[static_cast<std::size_t>(i)];
    w1 += std::abs(diff);
    sign[k] = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
  }
  grad.noalias() = data.transpose() * sign / static_cast<double>(m);
  return w1 / static_cast<double>(m);
}

}  // namespace

Vector wasserstein_nongaussianity(const Matrix& data, const Matrix& directions) {
  const Eigen::Index m = data.rows();
  const auto& zq = normal_scores(m);
  const Matrix proj = data * directions;
  Vector scores(directions.cols());
  std::vector<double> col(static_cast<std::size_t>(m));
  for (Eigen::Index c = 0; c < directions.cols(); ++c) {
    std::copy(proj.col(c).data(), proj.col(c).data() + m, col.begin());
    std::sort(col.begin(), col.end());
    double w1 = 0.0;
    for (std::size_t i = 0; i < col.size(); ++i) w1 += std::abs(col[i] - zq[i]);
    scores[c] = w1 / static_cast<double>(m);
  }
  return scores;
}

namespace {

Matrix random_unit_columns(Eigen::Index d, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix out(d, k);
  for (int j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) out(i, j) = normal(rng);
    out.col(j).normalize();
  }
  return out;
}

/// Removes the span of `basis` from the columns of `c` and normalizes; near-null
/// columns are dropped.
Matrix project_out(const Matrix& c, const Matrix& basis) {
  Matrix p = basis.cols() > 0 ? Matrix(c - basis * (basis.transpose() * c)) : c;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    const double nrm = p.col(j).norm();
    if (nrm > 1e-6) {
      p.col(j) /= nrm;
      keep.push_back(j);
    }
  }
  Matrix out(p.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = p.col(keep[j]);
  return out;
}

/// Projected subgradient ascent of the W1 score on the unit sphere restricted
/// to the orthogonal complement of `basis`. Steps are geodesic; the angle grows
/// on success and halves on failure.
Vector ascend_direction(const Matrix& data, Vector v, const Matrix& basis, int steps) {
  Vector grad(v.size()), cand_grad(v.size());
  double score = w1_with_gradient(data, v, grad);
  double angle = 0.3;
  for (int it = 0; it < steps && angle > 1e-3; ++it) {
    Vector t = grad;
    if (basis.cols() > 0) t -= basis * (basis.transpose() * t);
    t -= v * v.dot(t);
    const double tn = t.norm();
    if (!(tn > 1e-12)) break;
    Vector cand = std::cos(angle) * v + std::sin(angle) * (t / tn);
    if (basis.cols() > 0) cand -= basis * (basis.transpose() * cand);
    cand.normalize();
    const double cand_score = w1_with_gradient(data, cand, cand_grad);
    if (cand_score > score) {
      v = cand;
      score = cand_score;
      grad.swap(cand_grad);
      angle = std::min(1.0, 1.5 * angle);
    } else {
      angle *= 0.5;
    }
  }
  return v;
}

}  // namespace

Matrix select_rotation(const Matrix& data, const FlowConfig& cfg, std::uint64_t stream) {
  const Eigen::Index d = data.cols();
  auto rng = make_rng(cfg.seed, 0xf10e, stream);

  // location is the marginal maps' job; score shape and spread only
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto centered_rows = [&](Eigen::Index limit) {
    const Eigen::Index m = std::min<Eigen::Index>(limit, data.rows());
    Matrix out(m, d);
    for (Eigen::Index i = 0; i < m; ++i) out.row(i) = data.row(idx[static_cast<std::size_t>(i)]);
    out.rowwise() -= out.colwise().mean();
    return out;
  };
  // candidates are screened on a small subsample, the winner is polished on a larger one
  const Matrix screen = centered_rows(cfg.max_score_samples);
  const Matrix polish = centered_rows(cfg.max_ascent_samples);

  const Matrix cov = screen.transpose() * screen / static_cast<double>(std::max<Eigen::Index>(1, screen.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);

  Matrix candidates(d, 2 * d + cfg.n_random_directions);
  candidates << Matrix::Identity(d, d), eig.eigenvectors(), random_unit_columns(d, cfg.n_random_directions, rng);

  Matrix basis(d, 0);
  for (Eigen::Index k = 0; k < d; ++k) {
    Matrix pool = project_out(candidates, basis);
    if (pool.cols() == 0) pool = project_out(random_unit_columns(d, 4, rng), basis);
    const Vector scores = wasserstein_nongaussianity(screen, pool);
    Eigen::Index best = 0;
    scores.maxCoeff(&best);
    Vector v = pool.col(best);

    if (cfg.ascent_steps > 0 && d - k > 1) v = ascend_direction(polish, v, basis, cfg.ascent_steps);
    // re-orthogonalize for round-off
    if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
    v.normalize();
    basis.conservativeResize(Eigen::NoChange, k + 1);
    basis.col(k) = v;
  }
  return basis.transpose();
}

namespace {

/// PCA rotation followed by per-axis affine standardization: an exactly
/// representable whitening step.
FlowLayer whitening_layer(const Matrix& data) {
  const Eigen::Index n = data.rows(), d = data.cols();
  const Vector mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  FlowLayer out;
  out.rotation = eig.eigenvectors().transpose();
  const Vector rotated_mean = out.rotation * mean;
  out.marginals.reserve(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sd = std::sqrt(std::max(eig.eigenvalues()[j], 1e-300));
    out.marginals.push_back(MonotoneMap1D::affine(1.0 / sd, -rotated_mean[j] / sd));
  }
  return out;
}

Matrix apply_layer(const FlowLayer& layer, const Matrix& data) {
  Matrix u = data * layer.rotation.transpose();
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    const auto& m = layer.marginals[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < u.rows(); ++i) u(i, j) = m(u(i, j));
  }
  return u;
}

}  // namespace

FlowModel fit_flow(const Matrix& samples, const FlowConfig& cfg) {
  const Eigen::Index n = samples.rows(), d = samples.cols();
  if (d < 1) throw std::invalid_argument("flow fit: samples have no columns");
  if (cfg.n_layers < 1) throw std::invalid_argument("flow fit: n_layers must be at least 1");
  if (n < 10 * d) {
    std::ostringstream os;
    os << "flow fit needs at least " << 10 * d << " samples for dimension " << d << ", got " << n;
    throw FlowFitError(os.str());
  }
  if (!samples.allFinite()) throw FlowFitError("flow fit: non-finite samples");

  {
    const Matrix centered = samples.rowwise() - samples.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const double top = eig.eigenvalues().maxCoeff();
    const double bottom = eig.eigenvalues().minCoeff();
    if (!(top > 0.0) || bottom <= 1e-12 * top) {
      std::ostringstream os;
      os.precision(6);
      os << "flow fit: samples are degenerate (zero variance) along direction [" << eig.eigenvectors().col(0).transpose()
         << "]";
      throw FlowFitError(os.str());
    }
  }

  FlowModel model(d);
  Matrix current = samples;
  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    if (cfg.whiten) {
      FlowLayer wl = whitening_layer(current);
      current = apply_layer(wl, current);
      model.add_layer(std::move(wl));
    }
    FlowLayer fl;
    fl.rotation = select_rotation(current, cfg, static_cast<std::uint64_t>(layer));
    Matrix u = current * fl.rotation.transpose();
    fl.marginals.reserve(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
      fl.marginals.push_back(fit_marginal(u.col(j), cfg.n_knots, cfg.bandwidth_factor));
      const auto& m = fl.marginals.back();
      for (Eigen::Index i = 0; i < n; ++i) u(i, j) = m(u(i, j));
    }
    current = std::move(u);
    model.add_layer(std::move(fl));
  }
  return model;
}

FlowDraws flow_sample(const FlowModel& model, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("flow_sample needs n >= 1");
  auto rng = make_rng(seed, 0xd7a3);
  std::normal_distribution<double> normal;
  Matrix z(n, model.dim());
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < model.dim(); ++j) z(i, j) = normal(rng);
  FlowDraws out;
  out.samples = model.inverse(z);
  out.log_q = model.log_density(out.samples);
  return out;
}

}  // namespace gbs
