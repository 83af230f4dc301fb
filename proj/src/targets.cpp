#include "gbs/targets.hpp"

#include "gbs/math.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace gbs {

TargetDistribution::TargetDistribution(std::string name, Vector lower, Vector upper,
                                       LogLikelihoodFn log_likelihood,
                                       std::optional<double> fiducial_ln_z)
    : name_(std::move(name)),
      lower_(std::move(lower)),
      upper_(std::move(upper)),
      loglik_(std::move(log_likelihood)),
      fiducial_(fiducial_ln_z) {
  if (lower_.size() == 0 || lower_.size() != upper_.size())
    throw std::invalid_argument("target '" + name_ + "': prior bounds must be non-empty and equal length");
  for (Eigen::Index i = 0; i < lower_.size(); ++i) {
    if (!(lower_[i] < upper_[i]))
      throw std::invalid_argument("target '" + name_ + "': lower bound not below upper bound in dimension " +
                                  std::to_string(i));
  }
  log_volume_ = (upper_ - lower_).array().log().sum();
}

void TargetDistribution::check_dim(const Vector& x) const {
  if (x.size() != dim()) {
    std::ostringstream os;
    os << "target '" << name_ << "' expects dimension " << dim() << ", got " << x.size();
    throw std::invalid_argument(os.str());
  }
}

bool TargetDistribution::in_support(const Vector& x) const {
  return (x.array() >= lower_.array()).all() && (x.array() <= upper_.array()).all();
}

double TargetDistribution::log_likelihood(const Vector& x) const {
  check_dim(x);
  return loglik_(x, nullptr);
}

double TargetDistribution::log_likelihood(const Vector& x, Vector& grad) const {
  check_dim(x);
  grad.resize(dim());
  return loglik_(x, &grad);
}

double TargetDistribution::log_posterior(const Vector& x) const {
  check_dim(x);
  if (!in_support(x)) return kNegInf;
  return loglik_(x, nullptr) - log_volume_;
}

Vector TargetDistribution::grad_log_posterior(const Vector& x) const {
  check_dim(x);
  if (!in_support(x)) throw std::domain_error("gradient requested outside the prior box of '" + name_ + "'");
  Vector g(dim());
  loglik_(x, &g);
  return g;
}

namespace {

Vector constant(int n, double v) { return Vector::Constant(n, v); }

}  // namespace

TargetDistribution make_funnel(int n, double a, double b) {
  Vector lo = constant(n, -30.0), hi = constant(n, 30.0);
  lo[0] = -4.0;
  hi[0] = 4.0;
  auto fn = [n, a, b](const Vector& x, Vector* grad) {
    const double x1 = x[0];
    // x_i ~ N(0, exp(2 b x1)) for i >= 2
    const double log_sd = b * x1;
    const double inv_var = std::exp(-2.0 * log_sd);
    const double tail_sq = x.tail(n - 1).squaredNorm();
    double lp = normal_log_pdf(x1, 0.0, a);
    lp += -0.5 * (n - 1) * kLn2Pi - (n - 1) * log_sd - 0.5 * tail_sq * inv_var;
    if (grad) {
      (*grad)[0] = -x1 / (a * a) + b * tail_sq * inv_var - (n - 1) * b;
      grad->tail(n - 1) = -x.tail(n - 1) * inv_var;
    }
    return lp;
  };
  std::optional<double> fid;
  if (n == 16 && a == 1.0 && b == 0.5) fid = -63.4988;
  return TargetDistribution("funnel" + std::to_string(n), lo, hi, fn, fid);
}

Matrix random_rotation(int n, std::uint64_t seed) {
  auto rng = make_rng(seed, 0xa11ce);
  std::normal_distribution<double> normal;
  Matrix g(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  if (q.determinant() < 0) q.col(0) *= -1.0;
  return q;
}

TargetDistribution make_banana(const Matrix& rotation, double q) {
  const int n = static_cast<int>(rotation.rows());
  if (n % 2 != 0 || rotation.cols() != n)
    throw std::invalid_argument("banana needs a square rotation of even dimension");
  auto fn = [rotation, q, n](const Vector& x, Vector* grad) {
    const Vector y = rotation * x;
    double lp = 0.0;
    Vector gy;
    if (grad) gy.resize(n);
    for (int i = 0; i < n; i += 2) {
      const double curve = y[i] * y[i] - y[i + 1];
      const double shift = y[i] - 1.0;
      lp -= curve * curve / q + shift * shift;
      if (grad) {
        gy[i] = -4.0 * y[i] * curve / q - 2.0 * shift;
        gy[i + 1] = 2.0 * curve / q;
      }
    }
    if (grad) grad->noalias() = rotation.transpose() * gy;
    return lp;
  };
  std::optional<double> fid;
  if (n == 32 && q == 0.01) fid = -127.364;
  TargetDistribution t("banana" + std::to_string(n), constant(n, -15.0), constant(n, 15.0), fn, fid);
  t.set_rotation(rotation);
  return t;
}

TargetDistribution make_banana(int n, double q, std::uint64_t rotation_seed) {
  return make_banana(random_rotation(n, rotation_seed), q);
}

TargetDistribution make_cauchy(int n, double mu, double sigma) {
  auto fn = [n, mu, sigma](const Vector& x, Vector* grad) {
    // each coordinate: 0.5 [Cauchy(x|mu,s) + Cauchy(x|-mu,s)]
    const double log_norm = -std::log(std::numbers::pi * sigma);
    double lp = 0.0;
    for (int i = 0; i < n; ++i) {
      const double up = (x[i] - mu) / sigma, dn = (x[i] + mu) / sigma;
      const double cu = 1.0 / (1.0 + up * up), cd = 1.0 / (1.0 + dn * dn);
      lp += std::log(0.5 * (cu + cd)) + log_norm;
      if (grad) {
        const double dcu = -2.0 * up * cu * cu / sigma, dcd = -2.0 * dn * cd * cd / sigma;
        (*grad)[i] = (dcu + dcd) / (cu + cd);
      }
    }
    return lp;
  };
  std::optional<double> fid;
  if (n == 48 && mu == 5.0 && sigma == 1.0) fid = -254.627;
  return TargetDistribution("cauchy" + std::to_string(n), constant(n, -100.0), constant(n, 100.0), fn, fid);
}

TargetDistribution make_ring(int n, double a, double b, int power) {
  if (power != 2 && power != 4) throw std::invalid_argument("ring power must be 2 or 4");
  auto fn = [n, a, b, power](const Vector& x, Vector* grad) {
    double lp = 0.0;
    if (grad) grad->setZero();
    for (int i = 0; i < n; ++i) {
      const int j = (i + 1) % n;
      const double s = x[i] * x[i] + x[j] * x[j] - a;
      const double u = s * s / b;
      // c = d(term)/d(x_i) / x_i
      double c;
      if (power == 2) {
        lp -= u;
        c = 4.0 * s / b;
      } else {
        lp -= u * u;
        c = 8.0 * u * s / b;
      }
      if (grad) {
        (*grad)[i] -= c * x[i];
        (*grad)[j] -= c * x[j];
      }
    }
    return lp;
  };
  std::optional<double> fid;
  if (n == 64 && a == 2.0 && b == 1.0 && power == 2) fid = -114.492;
  return TargetDistribution("ring" + std::to_string(n), constant(n, -5.0), constant(n, 5.0), fn, fid);
}

std::vector<std::string> target_names() { return {"funnel16", "banana32", "cauchy48", "ring64"}; }

std::optional<TargetDistribution> make_target(const std::string& name) {
  if (name == "funnel16") return make_funnel();
  if (name == "banana32") return make_banana();
  if (name == "cauchy48") return make_cauchy();
  if (name == "ring64") return make_ring();
  return std::nullopt;
}

std::optional<double> fiducial_ln_z(const std::string& name) {
  if (name == "funnel16") return -63.4988;
  if (name == "banana32") return -127.364;
  if (name == "cauchy48") return -254.627;
  if (name == "ring64") return -114.492;
  return std::nullopt;
}

}  // namespace gbs
