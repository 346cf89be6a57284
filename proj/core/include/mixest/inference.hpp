#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include <Eigen/Core>

#include "mixest/estimators.hpp"

namespace mixest {

struct SandwichResult {
  double variance = 0.0;
  double se = 0.0;
  Eigen::MatrixXd bread;  // A = -(1/N) sum d psi / d theta
  Eigen::MatrixXd meat;   // B =  (1/N) sum psi psi^T
};

struct BootstrapResult {
  double se = 0.0;
  Eigen::VectorXd replicate_estimates;  // successful replicates only
  int failed_count = 0;
};

// Which stacked estimating system the sandwich is assembled from.
struct EstimatingSystem {
  enum class Kind { ipw, mipw, ow };
  Kind kind = Kind::ipw;
  double delta = 0.0;  // used by mipw only

  static EstimatingSystem ipw() { return {Kind::ipw, 0.0}; }
  static EstimatingSystem mipw(double delta) { return {Kind::mipw, delta}; }
  static EstimatingSystem ow() { return {Kind::ow, 0.0}; }
};

// Huber-White sandwich for the scalar contrast c^T theta, c = (0,...,0,1,-1).
// Bread is assembled by central finite differences of the mean estimating
// function; meat from per-unit outer products.
SandwichResult sandwich_se(const ObservedSample& sample, const ThetaHat& theta,
                           const EstimatingSystem& system);

// Estimator callback: full estimate on a (re)sampled dataset, given a derived
// seed for any internal randomness (mixing replicates etc.).
using EstimatorFn = std::function<double(const ObservedSample&, std::uint64_t)>;

// Pairs bootstrap: resample N units with replacement B times. Failed
// replicates are dropped and counted; more than 20% failures is an error.
BootstrapResult bootstrap_se(const ObservedSample& sample, const EstimatorFn& estimator,
                             int B, std::uint64_t seed);

}  // namespace mixest
