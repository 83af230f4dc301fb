#include "gbs/diagnostics.hpp"

#include "gbs/math.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>

namespace gbs {

namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

Vector autocorrelation(const Vector& series) {
  const auto n = static_cast<std::size_t>(series.size());
  const double mean = series.mean();
  std::vector<double> padded(2 * next_pow2(n), 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[i] = series[static_cast<Eigen::Index>(i)] - mean;

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, padded);
  for (auto& s : spectrum) s *= std::conj(s);
  std::vector<std::complex<double>> back;
  fft.inv(back, spectrum);

  Vector acf(static_cast<Eigen::Index>(n));
  const double zero_lag = back[0].real();
  for (std::size_t i = 0; i < n; ++i) acf[static_cast<Eigen::Index>(i)] = zero_lag > 0 ? back[i].real() / zero_lag : 0.0;
  return acf;
}

AutocorrResult integrated_autocorr_time(const std::vector<Vector>& chains, double c) {
  if (chains.empty()) throw std::invalid_argument("autocorrelation time needs at least one chain");
  Eigen::Index len = chains.front().size();
  double total = 0.0;
  for (const auto& ch : chains) {
    len = std::min(len, ch.size());
    total += static_cast<double>(ch.size());
  }
  if (len < 50)
    throw std::invalid_argument("autocorrelation time needs at least 50 points per chain, got " +
                                std::to_string(len));

  AutocorrResult out;
  Vector mean_acf = Vector::Zero(len);
  int used = 0;
  for (const auto& ch : chains) {
    const Vector head = ch.head(len);
    if ((head.array() == head[0]).all()) continue;
    mean_acf += autocorrelation(head);
    ++used;
  }
  if (used == 0) {
    out.zero_variance = true;
    out.tau = 1.0;
    out.window = 0;
    out.ess = total;
    return out;
  }
  mean_acf /= used;

  // tau(W) = 2 * sum_{k=0}^{W} rho(k) - 1
  double cumulative = 0.0;
  double tau = 1.0;
  int window = static_cast<int>(len) - 1;
  for (Eigen::Index k = 0; k < len; ++k) {
    cumulative += mean_acf[k];
    tau = 2.0 * cumulative - 1.0;
    if (static_cast<double>(k) >= c * tau) {
      window = static_cast<int>(k);
      break;
    }
  }
  out.tau = std::max(1.0, tau);
  out.window = window;
  out.ess = total / out.tau;
  return out;
}

AutocorrResult integrated_autocorr_time(const Vector& series, double c) {
  return integrated_autocorr_time(std::vector<Vector>{series}, c);
}

ReplicationSummary replication_summary(const std::vector<EvidenceEstimate>& estimates, double fiducial) {
  if (estimates.size() < 2) throw std::invalid_argument("replication summary needs at least two estimates");
  ReplicationSummary s;
  s.n = static_cast<int>(estimates.size());
  std::vector<double> err, ln_z;
  double covered = 0.0;
  for (const auto& e : estimates) {
    err.push_back(e.ln_z - fiducial);
    ln_z.push_back(e.ln_z);
    s.mean_std_err += e.std_err;
    s.mean_likelihood_evals += static_cast<double>(e.evals.likelihood);
    s.mean_gradient_evals += static_cast<double>(e.evals.gradient);
    if (std::abs(e.ln_z - fiducial) <= 2.0 * e.std_err) covered += 1.0;
  }
  const double n = static_cast<double>(s.n);
  s.mean_std_err /= n;
  s.mean_likelihood_evals /= n;
  s.mean_gradient_evals /= n;
  s.coverage = covered / n;
  s.q05 = quantile(err, 0.05);
  s.q25 = quantile(err, 0.25);
  s.q50 = quantile(err, 0.50);
  s.q75 = quantile(err, 0.75);
  s.q95 = quantile(err, 0.95);
  s.median_ln_z = quantile(ln_z, 0.5);
  // shifted sums keep identical inputs at exactly zero spread
  double sum = 0.0, sum_sq = 0.0;
  for (double v : err) {
    const double d = v - err.front();
    sum += d;
    sum_sq += d * d;
  }
  s.empirical_std = std::sqrt(std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0)));
  return s;
}

}  // namespace gbs
