#pragma once

#include <optional>
#include <utility>

#include <Eigen/Core>

#include "mixest/dataset.hpp"

namespace mixest {

struct PropensityFit {
  Eigen::VectorXd beta;  // intercept first, then one slope per covariate
  Eigen::VectorXd fitted_probs;
  double log_likelihood = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Parameters of a mixed distribution. The simple preset (theta0 = 0,
// theta1 = 1-delta, pi_star = pi) is the one used by all estimators here;
// general theta values are supported at the formula level only.
struct MixSpec {
  double delta = 0.0;
  double pi_star = 0.0;
  double theta1 = 1.0;
  double theta0 = 0.0;
  // Optional per-unit mixing proportions (heterogeneous mixing, formula level).
  std::optional<Eigen::VectorXd> per_unit_delta;

  static MixSpec simple(double delta, double pi);
};

// Newton-Raphson logistic MLE with step-halving. Throws SeparationError when
// the coefficient norm diverges or the iteration cap is hit.
PropensityFit fit_logistic(const ObservedSample& sample);
PropensityFit fit_logistic(const Eigen::MatrixXd& covariates,
                           const Eigen::VectorXd& treatments);

double logistic_log_likelihood(const Eigen::MatrixXd& covariates,
                               const Eigen::VectorXd& treatments,
                               const Eigen::VectorXd& beta);

// Synthetic odds of the simple mixed distribution:
//   e*/(1-e*) = (1-delta) * odds + delta * pi/(1-pi).
double simple_mixed_odds(double odds, double delta, double pi);
Eigen::VectorXd simple_mixed_odds(const Eigen::VectorXd& odds, double delta, double pi);
Eigen::VectorXd simple_mixed_odds(const Eigen::VectorXd& odds,
                                  const Eigen::VectorXd& per_unit_delta, double pi);

// Synthetic odds of a general mixed distribution:
//   e*/(1-e*) = pi*/(1-pi*) * [th1*odds + (1-th1)*pi/(1-pi)]
//                          / [th0*odds + (1-th0)*pi/(1-pi)].
double general_mixed_odds(double odds, const MixSpec& mix, double pi);

// Weights (w0, w1) identifying E[Y(0)|Z=1] from mixed data; requires
// theta0 != theta1 and a nonsingular denominator.
std::pair<double, double> identification_weights(double odds_star,
                                                 const MixSpec& mix, double pi);

}  // namespace mixest
