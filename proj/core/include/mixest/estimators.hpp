#pragma once

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mixest/dataset.hpp"
#include "mixest/propensity.hpp"

namespace mixest {

enum class WeightProvenance { model, mixed_model, eb, mixed_eb, averaged };

// Per-control-unit weights on the odds scale. Signed entries are only
// produced by mixed entropy balancing; model-based weights are nonnegative.
struct WeightSet {
  Eigen::VectorXd control_weights;
  WeightProvenance provenance = WeightProvenance::model;
  int negative_count = 0;

  static WeightSet make(Eigen::VectorXd weights, WeightProvenance provenance);
};

struct Diagnostics {
  int negative_weights = 0;
  double max_weight = 0.0;
  double ess = 0.0;  // effective control sample size (sum w)^2 / sum w^2
  std::vector<std::string> warnings;
};

struct EstimateReport {
  std::string estimand;   // "ATT" or "ATO"
  std::string estimator;  // "ipw", "mipw", "mipw_m", "ow", "eb", "meb"
  double delta = std::numeric_limits<double>::quiet_NaN();
  double point = 0.0;
  std::optional<double> robust_se;
  std::optional<double> boot_se;
  Diagnostics diagnostics;
};

// Solution of the stacked estimating system: (beta, pi, mu1, mu0).
struct ThetaHat {
  Eigen::VectorXd beta;
  double pi = 0.0;
  double mu1 = 0.0;
  double mu0 = 0.0;

  int dim() const { return static_cast<int>(beta.size()) + 3; }
  Eigen::VectorXd pack() const;
  static ThetaHat unpack(const Eigen::VectorXd& flat, int beta_len);
};

struct MipwOptions {
  double tol = 1e-10;
  int max_iterations = 100;
  // Re-solve from a perturbed start and warn if the roots disagree.
  bool check_multiple_roots = false;
};

// Normalized weighted-mean contrast: treated mean (unit weights) minus the
// weighted control mean. Invariant to rescaling the control weights.
double hajek_contrast(const ObservedSample& sample, const WeightSet& weights);

EstimateReport ipw_att(const ObservedSample& sample, const PropensityFit& fit);

// MIPW via the observed-data estimating system (pi, then beta, then the
// closed-form mu blocks); verifies the full stacked residual at the solution.
std::pair<EstimateReport, ThetaHat> mipw_att(const ObservedSample& sample, double delta,
                                             const MipwOptions& options = {});

// MIPW on augmented data: solves the mixed-sample system instead of the
// observed-data one. Test oracle for the equivalence of the two systems.
std::pair<EstimateReport, ThetaHat> mipw_att_augmented(const AugmentedSample& augmented,
                                                       double delta,
                                                       const MipwOptions& options = {});

EstimateReport ow_ato(const ObservedSample& sample, const PropensityFit& fit);

// Stacked residual sum of the augmented-data system at theta.
Eigen::VectorXd psi_star_residual(const ThetaHat& theta, const AugmentedSample& augmented,
                                  double delta);

// Per-unit estimating-function rows; delta = 0 gives the IPW system.
Eigen::MatrixXd psi_mipw_rows(const ObservedSample& sample, const ThetaHat& theta,
                              double delta);
Eigen::MatrixXd psi_ow_rows(const ObservedSample& sample, const ThetaHat& theta);

// Control-unit odds exp(x^T beta_slopes + beta0) for a fitted model.
Eigen::VectorXd control_odds(const ObservedSample& sample, const Eigen::VectorXd& beta);

// MLE of the synthetic-propensity family on a (mixed) sample: maximizes
// sum z log e*(x;beta) + (1-z) log(1-e*(x;beta)) with the simple-mixed link.
Eigen::VectorXd fit_synthetic_mle(const Eigen::MatrixXd& covariates,
                                  const Eigen::VectorXd& treatments, double delta,
                                  double pi, const Eigen::VectorXd& start,
                                  const MipwOptions& options = {});

// Stacked-system solutions backing the IPW / OW sandwich variances.
ThetaHat ipw_theta(const ObservedSample& sample, const PropensityFit& fit);
ThetaHat ow_theta(const ObservedSample& sample, const PropensityFit& fit);

}  // namespace mixest
