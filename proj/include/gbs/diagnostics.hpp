#pragma once

#include "gbs/estimators.hpp"
#include "gbs/types.hpp"

#include <vector>

namespace gbs {

struct AutocorrResult {
  double tau = 1.0;
  int window = 0;
  double ess = 0.0;  ///< n / tau, n summed over chains
  bool zero_variance = false;
};

/// Integrated autocorrelation time tau = 1 + 2 sum_{k=1}^{W} rho(k), with the
/// autocorrelation from FFTs averaged across chains and W the smallest lag
/// with W >= c * tau(W). Each chain needs at least 50 points.
AutocorrResult integrated_autocorr_time(const std::vector<Vector>& chains, double c = 5.0);
AutocorrResult integrated_autocorr_time(const Vector& series, double c = 5.0);

/// Normalized autocorrelation function of one series (lag 0 == 1).
Vector autocorrelation(const Vector& series);

struct ReplicationSummary {
  int n = 0;
  double q05 = 0, q25 = 0, q50 = 0, q75 = 0, q95 = 0;  ///< of ln Z - fiducial
  double median_ln_z = 0.0;
  double mean_std_err = 0.0;
  double empirical_std = 0.0;
  double coverage = 0.0;  ///< fraction with |ln Z - fiducial| <= 2 std_err
  double mean_likelihood_evals = 0.0;
  double mean_gradient_evals = 0.0;
};

ReplicationSummary replication_summary(const std::vector<EvidenceEstimate>& estimates, double fiducial);

}  // namespace gbs
