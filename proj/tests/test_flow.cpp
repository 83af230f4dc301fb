#include "gbs/flow.hpp"
#include "gbs/math.hpp"

#include <doctest.h>

#include <cmath>

using namespace gbs;

namespace {

// Two-component mixture 0.5 N(-2, 0.5^2) + 0.5 N(2, 0.5^2) in 1-d.
double mixture_log_pdf(double x) {
  return log_add_exp(normal_log_pdf(x, -2.0, 0.5), normal_log_pdf(x, 2.0, 0.5)) - std::log(2.0);
}

Matrix mixture_draws(int n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);
  Matrix x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = (coin(rng) ? 2.0 : -2.0) + 0.5 * normal(rng);
  return x;
}

// Curved 2-d cloud: y = x^2 / 2 + noise.
Matrix banana_draws(int n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal;
  Matrix x(n, 2);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = 0.5 * x(i, 0) * x(i, 0) + 0.3 * normal(rng);
  }
  return x;
}

FlowConfig small_flow(int layers) {
  FlowConfig cfg;
  cfg.n_layers = layers;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("monotone map") {
  const MonotoneMap1D m({-1.0, 0.0, 0.5, 2.0}, {-3.0, -1.0, 0.0, 4.0});
  CHECK(m(0.5) == doctest::Approx(0.0));
  CHECK(m(-1.0) == doctest::Approx(-3.0));
  double prev = m(-5.0);
  for (double x = -4.9; x < 5.0; x += 0.1) {
    const double y = m(x);
    CHECK(y > prev);
    prev = y;
    CHECK(m.inverse(y) == doctest::Approx(x).epsilon(1e-10));
    const double fd = (m(x + 1e-6) - m(x - 1e-6)) / 2e-6;
    CHECK(m.derivative(x) == doctest::Approx(fd).epsilon(1e-5));
  }
  // linear tails continue the end secants
  CHECK(m(3.0) - m(2.0) == doctest::Approx(4.0 / 1.5));
  CHECK(m(-2.0) - m(-1.0) == doctest::Approx(-2.0));
  CHECK_THROWS(MonotoneMap1D({0.0, 0.0}, {1.0, 2.0}));
  CHECK_THROWS(MonotoneMap1D({0.0}, {1.0}));
}

TEST_CASE("empty and scaling flows") {
  const FlowModel id(3);
  const Vector x = Vector::LinSpaced(3, -1.0, 1.0);
  CHECK(id.forward(x).first == x);
  CHECK(id.log_density(x) == doctest::Approx(-1.5 * kLn2Pi - 0.5 * x.squaredNorm()));

  FlowLayer scale;
  scale.rotation = Matrix::Identity(3, 3);
  for (int j = 0; j < 3; ++j) scale.marginals.push_back(MonotoneMap1D::affine(2.0, 0.0));
  const FlowModel doubled(3, {scale});
  CHECK(doubled.forward(x).second == doctest::Approx(3 * std::log(2.0)));
  CHECK(doubled.log_density(x) ==
        doctest::Approx(-1.5 * kLn2Pi - 0.5 * (2 * x).squaredNorm() + 3 * std::log(2.0)));
  CHECK(doubled.inverse(Vector(2 * x)).isApprox(x));

  const FlowDraws draws = flow_sample(id, 10000, 4);
  CHECK(draws.samples.colwise().mean().cwiseAbs().maxCoeff() < 4.0 / 100.0);
  CHECK(FlowModel(2).log_density(Vector(Vector::Zero(2))) == doctest::Approx(-kLn2Pi));
}

TEST_CASE("fitted flow inverts and its Jacobian is exact") {
  const Matrix data = banana_draws(3000, 1);
  const FlowModel model = fit_flow(data, small_flow(4));
  CHECK(model.layers().size() == 8);
  for (int i = 0; i < 20; ++i) {
    const Vector x = data.row(i * 37).transpose();
    const auto [z, log_det] = model.forward(x);
    CHECK((model.inverse(z) - x).norm() < 1e-6);
    Matrix jac(2, 2);
    for (int k = 0; k < 2; ++k) {
      Vector xp = x, xm = x;
      xp[k] += 1e-6;
      xm[k] -= 1e-6;
      jac.col(k) = (model.forward(xp).first - model.forward(xm).first) / 2e-6;
    }
    CHECK(log_det == doctest::Approx(std::log(std::abs(jac.determinant()))).epsilon(1e-4));
  }
  // batch and single-point paths agree
  const Vector batch = model.log_density(Matrix(data.topRows(5)));
  for (int i = 0; i < 5; ++i) CHECK(batch[i] == doctest::Approx(model.log_density(Vector(data.row(i).transpose()))));
}

TEST_CASE("fitted densities are normalized") {
  SUBCASE("1-d mixture") {
    const FlowModel model = fit_flow(mixture_draws(4000, 2), small_flow(3));
    const int m = 20000;
    const double lo = -12.0, hi = 12.0, h = (hi - lo) / m;
    double mass = 0.0;
    Vector x(1);
    for (int i = 0; i < m; ++i) {
      x[0] = lo + (i + 0.5) * h;
      mass += std::exp(model.log_density(x)) * h;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(0.01));
  }
  SUBCASE("2-d banana") {
    const FlowModel model = fit_flow(banana_draws(3000, 4), small_flow(4));
    const int m = 400;
    const double lo0 = -7.0, hi0 = 7.0, lo1 = -5.0, hi1 = 20.0;
    const double h0 = (hi0 - lo0) / m, h1 = (hi1 - lo1) / m;
    Matrix grid(m * m, 2);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) grid.row(i * m + j) << lo0 + (i + 0.5) * h0, lo1 + (j + 0.5) * h1;
    const double mass = model.log_density(grid).array().exp().sum() * h0 * h1;
    CHECK(mass == doctest::Approx(1.0).epsilon(0.01));
  }
}

TEST_CASE("bimodal mixture is recovered") {
  const Matrix data = mixture_draws(4000, 5);
  const FlowModel model = fit_flow(data, small_flow(3));
  // KL(p || q) estimated on fresh draws
  const Matrix fresh = mixture_draws(4000, 6);
  const Vector lq = model.log_density(fresh);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < fresh.rows(); ++i) kl += mixture_log_pdf(fresh(i, 0)) - lq[i];
  kl /= static_cast<double>(fresh.rows());
  CHECK(kl < 0.03);
  // the valley between the modes stays deep
  Vector gap(1), mode(1);
  gap[0] = 0.0;
  mode[0] = 2.0;
  CHECK(model.log_density(gap) < model.log_density(mode) - 3.0);
}

TEST_CASE("Gaussian data stay nearly Gaussian") {
  auto rng = make_rng(7);
  Matrix data(5000, 3);
  for (Eigen::Index i = 0; i < data.rows(); ++i) data.row(i) = standard_normal_vector(rng, 3).transpose();
  const FlowModel model = fit_flow(data, small_flow(2));
  double kl = 0.0;
  const int m = 4000;
  for (int i = 0; i < m; ++i) {
    const Vector x = standard_normal_vector(rng, 3);
    const double exact = -1.5 * kLn2Pi - 0.5 * x.squaredNorm();
    kl += exact - model.log_density(x);
    if (x.norm() < 2.0) CHECK(std::abs(model.log_density(x) - exact) < 0.3);
  }
  CHECK(kl / m < 0.03);
}

TEST_CASE("flow draws carry their density") {
  const FlowModel model = fit_flow(banana_draws(2000, 8), small_flow(3));
  const FlowDraws draws = flow_sample(model, 500, 9);
  CHECK(draws.samples.rows() == 500);
  CHECK((draws.log_q - model.log_density(draws.samples)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(flow_sample(model, 5, 9).samples == flow_sample(model, 5, 9).samples);
  CHECK_THROWS(flow_sample(model, 0, 1));
  // draws should look like the data: mean of y near E[x^2]/2 = 0.5
  CHECK(moments(draws.samples.col(1)).mean == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("rotation selection") {
  const Matrix data = banana_draws(2000, 10);
  const Matrix r = select_rotation(data.rowwise() - data.colwise().mean(), small_flow(1), 0);
  CHECK((r * r.transpose() - Matrix::Identity(2, 2)).norm() < 1e-10);
  // N(0,1) projections score lower than a stretched one
  auto rng = make_rng(4);
  Matrix g(4000, 2);
  for (Eigen::Index i = 0; i < g.rows(); ++i) g.row(i) << (rng() % 2 ? 3.0 : -3.0), 0.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, 1) = standard_normal_vector(rng, 1)[0];
  const Vector s = wasserstein_nongaussianity(g, Matrix::Identity(2, 2));
  CHECK(s[0] > 1.0);
  CHECK(s[1] < 0.05);
}

TEST_CASE("fit errors") {
  Matrix few = banana_draws(15, 1);
  CHECK_THROWS_AS(fit_flow(few, small_flow(1)), FlowFitError);
  Matrix flat = banana_draws(500, 1);
  flat.col(1).setConstant(2.0);
  CHECK_THROWS_AS(fit_flow(flat, small_flow(1)), FlowFitError);
  Matrix line = banana_draws(500, 1);
  line.col(1) = 2.0 * line.col(0);
  CHECK_THROWS_AS(fit_flow(line, small_flow(1)), FlowFitError);
  CHECK_THROWS_AS(fit_marginal(Vector::Constant(100, 1.0), 16, 1.0), FlowFitError);
}

TEST_CASE("Gaussian pushforward stays standard") {
  auto rng = make_rng(12);
  Matrix data(4000, 4);
  for (Eigen::Index i = 0; i < data.rows(); ++i) data.row(i) = standard_normal_vector(rng, 4).transpose();
  const FlowModel model = fit_flow(data, small_flow(5));
  const Matrix z = model.forward(data).first;
  const Matrix centered = z.rowwise() - z.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(z.rows() - 1);
  CHECK((cov - Matrix::Identity(4, 4)).norm() < 0.1 * 4);

  Matrix dirs(4, 100);
  for (int j = 0; j < 100; ++j) dirs.col(j) = standard_normal_vector(rng, 4).normalized();
  CHECK(wasserstein_nongaussianity(z, dirs).mean() < wasserstein_nongaussianity(data, dirs).mean());
}

TEST_CASE("wide bimodal mixture") {
  auto rng = make_rng(13);
  std::normal_distribution<double> normal;
  Matrix data(4000, 1);
  for (Eigen::Index i = 0; i < data.rows(); ++i) data(i, 0) = (i % 2 ? 5.0 : -5.0) + normal(rng);
  const FlowModel model = fit_flow(data, small_flow(5));
  const int m = 20000;
  const double lo = -20.0, hi = 20.0, h = (hi - lo) / m;
  double mass = 0.0;
  Vector x(1);
  for (int i = 0; i < m; ++i) {
    x[0] = lo + (i + 0.5) * h;
    mass += std::exp(model.log_density(x)) * h;
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(0.02));
  // two modes: few flow draws land in the valley, both sides are populated
  const FlowDraws draws = flow_sample(model, 10000, 1);
  const auto col = draws.samples.col(0).array();
  CHECK((col.abs() < 1.0).count() < 200);
  CHECK((col > 0.0).count() == doctest::Approx(5000).epsilon(0.05));
}

TEST_CASE("narrow banana ranks mode above tail") {
  // 2-d banana with Q = 0.01: y ~ x^2, x ~ N(1, 1/2)
  auto rng = make_rng(14);
  std::normal_distribution<double> normal;
  Matrix data(4000, 2);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    data(i, 0) = 1.0 + normal(rng) / std::sqrt(2.0);
    data(i, 1) = data(i, 0) * data(i, 0) + 0.1 / std::sqrt(2.0) * normal(rng);
  }
  const FlowModel model = fit_flow(data, small_flow(5));
  Vector mode(2), far(2);
  mode << 1.0, 1.0;
  far << 1.0 + 3 * 30.0, 1.0;
  CHECK(model.log_density(mode) > model.log_density(far));
}

TEST_CASE("round trip from the latent side") {
  const auto batch_like = [] {
    auto rng = make_rng(15);
    std::normal_distribution<double> normal;
    Matrix x(3000, 4);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double v = 1.5 * normal(rng);
      x(i, 0) = v;
      for (int j = 1; j < 4; ++j) x(i, j) = std::exp(0.5 * v) * normal(rng);
    }
    return x;
  }();
  const FlowModel model = fit_flow(batch_like, small_flow(4));
  auto rng = make_rng(16);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vector z = standard_normal_vector(rng, 4);
    worst = std::max(worst, (model.forward(model.inverse(z)).first - z).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-6);
}
