#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace gbs {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Likelihood and gradient call counts. A fused value+gradient call counts once
/// in each column.
struct EvalLedger {
  std::int64_t likelihood = 0;
  std::int64_t gradient = 0;

  EvalLedger& operator+=(const EvalLedger& o) {
    likelihood += o.likelihood;
    gradient += o.gradient;
    return *this;
  }
  friend EvalLedger operator+(EvalLedger a, const EvalLedger& b) { return a += b; }
  friend bool operator==(const EvalLedger&, const EvalLedger&) = default;
};

/// Raised when an estimator cannot produce a number (no overlap, all weights zero).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FlowFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gbs
