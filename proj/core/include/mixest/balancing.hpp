#pragma once

#include <cstdint>

#include "mixest/estimators.hpp"

namespace mixest {

struct BalanceSolution {
  Eigen::VectorXd lambda;  // dual vector, one entry per covariate
  Eigen::VectorXd control_weights_odds_scale;  // sums to N_t
  double max_imbalance = 0.0;  // max abs standardized mean difference
  bool converged = false;
};

struct BalanceOptions {
  double tol = 1e-9;  // on max standardized imbalance
  int max_iterations = 200;
};

// Entropy balancing for ATT: minimize the convex dual
// log sum_{controls} exp(lambda^T (X_i - Xbar_treated)); resulting weights
// are rescaled so that the control weights sum to N_t (odds scale).
BalanceSolution eb_weights(const ObservedSample& sample,
                           const BalanceOptions& options = {});

// EB solved against an explicit balance target (used per mixed replicate).
BalanceSolution eb_weights(const Eigen::MatrixXd& control_covariates,
                           const Eigen::VectorXd& treated_mean,
                           const Eigen::VectorXd& scale, double n_treated,
                           const BalanceOptions& options = {});

EstimateReport eb_att(const ObservedSample& sample,
                      const BalanceOptions& options = {});

// Back-adjustment of a mixed-sample balancing weight to the original scale:
// w = (w* - delta*pi/(1-pi)) / (1-delta). Inverts the simple mixed odds map.
double prop3_adjust(double w_star, double delta, double pi);

struct MixedEbOptions {
  BalanceOptions balance;
  double max_failure_fraction = 0.10;
};

// Mixed entropy balancing: EB per mixing replicate, back-adjust the weights,
// average across replicates, and take one Hajek contrast. Negative adjusted
// weights are retained and counted.
EstimateReport mixed_eb(const ObservedSample& sample, double delta, int M,
                        std::uint64_t seed, const MixedEbOptions& options = {});

}  // namespace mixest
