#include "mixest/estimators.hpp"

#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "mixest/errors.hpp"

namespace mixest {

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design;
}

Eigen::VectorXd odds_vector(const Eigen::MatrixXd& design, const Eigen::VectorXd& beta) {
  return (design * beta).array().exp().matrix();
}

Diagnostics weight_diagnostics(const Eigen::VectorXd& weights) {
  Diagnostics diag;
  diag.negative_weights = static_cast<int>((weights.array() < 0.0).count());
  diag.max_weight = weights.size() ? weights.maxCoeff() : 0.0;
  const double s = weights.sum();
  const double s2 = weights.squaredNorm();
  diag.ess = s2 > 0.0 ? s * s / s2 : 0.0;
  return diag;
}

// Per-unit scalar of the observed-data beta block: the estimating function is
// sum_i phi(o_i) x_i with u = (1-delta)*o + delta*pi/(1-pi),
//   treated: phi =  (1-delta)^2 o   / (u(1+u))
//   control: phi = -(1-delta)^2 o^2 / (u(1+u)).
// At delta = 0 this is the ordinary logistic score (z - e) x.
struct BetaBlock {
  double k;  // 1 - delta
  double a;  // delta * pi / (1 - pi)

  double phi(double o, bool treated) const {
    const double u = k * o + a;
    const double den = u * (1.0 + u);
    return treated ? k * k * o / den : -k * k * o * o / den;
  }
  // d phi / d o
  double dphi(double o, bool treated) const {
    const double u = k * o + a;
    const double den = u * (1.0 + u);
    const double dden = k * (1.0 + 2.0 * u);
    if (treated) return k * k * (den - o * dden) / (den * den);
    return -k * k * (2.0 * o * den - o * o * dden) / (den * den);
  }
};

// Damped Newton on a square score system; step-halving on the residual norm.
Eigen::VectorXd newton_solve(
    const Eigen::VectorXd& start,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jacobian,
    double tol, int max_iterations, const char* what) {
  Eigen::VectorXd beta = start;
  Eigen::VectorXd f = residual(beta);
  for (int iter = 0; iter < max_iterations; ++iter) {
    if (f.norm() < tol) return beta;
    Eigen::MatrixXd j = jacobian(beta);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
    if (!lu.isInvertible())
      throw SolverError(std::string(what) + ": singular Jacobian at iteration " +
                        std::to_string(iter));
    Eigen::VectorXd step = lu.solve(-f);
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    Eigen::VectorXd fc = residual(candidate);
    int halvings = 0;
    while (!(fc.norm() < f.norm()) && halvings < 40) {
      scale *= 0.5;
      candidate = beta + scale * step;
      fc = residual(candidate);
      ++halvings;
    }
    if (halvings == 40)
      throw SolverError(std::string(what) + ": line search stalled at iteration " +
                        std::to_string(iter) + ", residual " + std::to_string(f.norm()));
    beta = candidate;
    f = fc;
  }
  if (f.norm() < tol) return beta;
  throw SolverError(std::string(what) + ": no convergence in " +
                    std::to_string(max_iterations) + " iterations, residual " +
                    std::to_string(f.norm()));
}

double hajek_weighted_mean(const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const double wsum = w.sum();
  if (std::abs(wsum) < 1e-300)
    throw DegenerateWeightsError("control weight sum is zero");
  return w.dot(y) / wsum;
}

}  // namespace

WeightSet WeightSet::make(Eigen::VectorXd weights, WeightProvenance provenance) {
  WeightSet ws;
  ws.negative_count = static_cast<int>((weights.array() < 0.0).count());
  if (ws.negative_count > 0 && provenance != WeightProvenance::mixed_eb &&
      provenance != WeightProvenance::averaged)
    throw ValidationError("negative weights only allowed for mixed-eb provenance");
  ws.control_weights = std::move(weights);
  ws.provenance = provenance;
  return ws;
}

Eigen::VectorXd ThetaHat::pack() const {
  Eigen::VectorXd flat(dim());
  flat.head(beta.size()) = beta;
  flat[beta.size()] = pi;
  flat[beta.size() + 1] = mu1;
  flat[beta.size() + 2] = mu0;
  return flat;
}

ThetaHat ThetaHat::unpack(const Eigen::VectorXd& flat, int beta_len) {
  ThetaHat theta;
  theta.beta = flat.head(beta_len);
  theta.pi = flat[beta_len];
  theta.mu1 = flat[beta_len + 1];
  theta.mu0 = flat[beta_len + 2];
  return theta;
}

double hajek_contrast(const ObservedSample& sample, const WeightSet& weights) {
  const auto& controls = sample.control_indices();
  if (weights.control_weights.size() != static_cast<Eigen::Index>(controls.size()))
    throw ValidationError("weight vector length does not match control count");
  double treated_sum = 0.0;
  for (int i : sample.treated_indices()) treated_sum += sample.outcomes()[i];
  const double treated_mean = treated_sum / sample.treated_count();

  Eigen::VectorXd yc(controls.size());
  for (std::size_t j = 0; j < controls.size(); ++j)
    yc[static_cast<Eigen::Index>(j)] = sample.outcomes()[controls[j]];
  return treated_mean - hajek_weighted_mean(yc, weights.control_weights);
}

Eigen::VectorXd control_odds(const ObservedSample& sample, const Eigen::VectorXd& beta) {
  const auto& controls = sample.control_indices();
  Eigen::VectorXd out(controls.size());
  for (std::size_t j = 0; j < controls.size(); ++j) {
    const int i = controls[j];
    double eta = beta[0];
    for (int c = 0; c < sample.dim(); ++c) eta += beta[c + 1] * sample.covariates()(i, c);
    out[static_cast<Eigen::Index>(j)] = std::exp(eta);
  }
  return out;
}

EstimateReport ipw_att(const ObservedSample& sample, const PropensityFit& fit) {
  if (!fit.converged) throw SolverError("ipw_att requires a converged propensity fit");
  Eigen::VectorXd odds = control_odds(sample, fit.beta);
  WeightSet ws = WeightSet::make(odds, WeightProvenance::model);
  EstimateReport report;
  report.estimand = "ATT";
  report.estimator = "ipw";
  report.point = hajek_contrast(sample, ws);
  report.diagnostics = weight_diagnostics(odds);
  if (report.diagnostics.max_weight > 1e3)
    report.diagnostics.warnings.push_back("extreme control odds above 1e3");
  return report;
}

std::pair<EstimateReport, ThetaHat> mipw_att(const ObservedSample& sample, double delta,
                                             const MipwOptions& options) {
  if (!(delta > 0.0 && delta < 1.0))
    throw BoundaryError("delta must lie strictly inside (0,1)");

  const Eigen::MatrixXd design = with_intercept(sample.covariates());
  const Eigen::VectorXd& z = sample.treatments();
  const int n = sample.size();
  const double pi = sample.pi_hat();
  const BetaBlock block{1.0 - delta, delta * pi / (1.0 - pi)};

  auto residual = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd o = odds_vector(design, beta);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(design.cols());
    for (int i = 0; i < n; ++i) f += block.phi(o[i], z[i] == 1.0) * design.row(i);
    return f;
  };
  auto jacobian = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd o = odds_vector(design, beta);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(design.cols(), design.cols());
    for (int i = 0; i < n; ++i) {
      const double coef = block.dphi(o[i], z[i] == 1.0) * o[i];
      j += coef * design.row(i).transpose() * design.row(i);
    }
    return j;
  };

  // The mixed score coincides with the logistic score at delta = 0, so the
  // plain MLE is the warm start.
  PropensityFit mle = fit_logistic(sample);
  const double tol = options.tol * std::max(1.0, static_cast<double>(n));
  Eigen::VectorXd beta = newton_solve(mle.beta, residual, jacobian, tol,
                                      options.max_iterations, "mipw beta block");

  ThetaHat theta;
  theta.beta = beta;
  theta.pi = pi;
  double y1_sum = 0.0;
  for (int i : sample.treated_indices()) y1_sum += sample.outcomes()[i];
  theta.mu1 = y1_sum / sample.treated_count();

  const Eigen::VectorXd odds = control_odds(sample, beta);
  const auto& controls = sample.control_indices();
  Eigen::VectorXd yc(controls.size());
  for (std::size_t j = 0; j < controls.size(); ++j)
    yc[static_cast<Eigen::Index>(j)] = sample.outcomes()[controls[j]];
  theta.mu0 = hajek_weighted_mean(yc, odds);

  // Full stacked residual at the solution.
  const Eigen::VectorXd stacked = psi_mipw_rows(sample, theta, delta).colwise().sum();
  if (stacked.norm() > 1e-8 * n)
    throw SolverError("mipw stacked residual check failed: " +
                      std::to_string(stacked.norm()));

  EstimateReport report;
  report.estimand = "ATT";
  report.estimator = "mipw";
  report.delta = delta;
  report.point = theta.mu1 - theta.mu0;
  // Adjusted weights (1-delta)*odds are the ones the contrast is built from.
  report.diagnostics = weight_diagnostics(((1.0 - delta) * odds.array()).matrix());
  if (report.diagnostics.max_weight > 1e3)
    report.diagnostics.warnings.push_back("extreme control odds above 1e3");

  if (options.check_multiple_roots) {
    Eigen::VectorXd perturbed = mle.beta;
    for (Eigen::Index i = 0; i < perturbed.size(); ++i)
      perturbed[i] += (i % 2 == 0 ? 0.25 : -0.25);
    try {
      Eigen::VectorXd beta2 = newton_solve(perturbed, residual, jacobian, tol,
                                           options.max_iterations, "mipw beta block");
      if ((beta2 - beta).norm() > 1e-6)
        report.diagnostics.warnings.push_back("multiple-root suspicion in beta block");
    } catch (const SolverError&) {
      // Perturbed start may leave the basin; only disagreement is reported.
    }
  }
  return {report, theta};
}

Eigen::VectorXd fit_synthetic_mle(const Eigen::MatrixXd& covariates,
                                  const Eigen::VectorXd& treatments, double delta,
                                  double pi, const Eigen::VectorXd& start,
                                  const MipwOptions& options) {
  if (!(delta > 0.0 && delta < 1.0))
    throw BoundaryError("delta must lie strictly inside (0,1)");
  const Eigen::MatrixXd design = with_intercept(covariates);
  const int n = static_cast<int>(design.rows());
  const double k = 1.0 - delta;
  const double a = delta * pi / (1.0 - pi);

  // Score of the synthetic-propensity log-likelihood:
  //   treated: t =  k o / (u(1+u)),  control: t = -k o / (1+u).
  auto t_of = [&](double o, bool treated) {
    const double u = k * o + a;
    return treated ? k * o / (u * (1.0 + u)) : -k * o / (1.0 + u);
  };
  auto dt_of = [&](double o, bool treated) {
    const double u = k * o + a;
    if (treated) {
      const double den = u * (1.0 + u);
      const double dden = k * (1.0 + 2.0 * u);
      return k * (den - o * dden) / (den * den);
    }
    return -k * ((1.0 + u) - o * k) / ((1.0 + u) * (1.0 + u));
  };
  auto residual = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd o = odds_vector(design, beta);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(design.cols());
    for (int i = 0; i < n; ++i) f += t_of(o[i], treatments[i] == 1.0) * design.row(i);
    return f;
  };
  auto jacobian = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd o = odds_vector(design, beta);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(design.cols(), design.cols());
    for (int i = 0; i < n; ++i) {
      const double coef = dt_of(o[i], treatments[i] == 1.0) * o[i];
      j += coef * design.row(i).transpose() * design.row(i);
    }
    return j;
  };

  const double tol = options.tol * std::max(1.0, static_cast<double>(n));
  return newton_solve(start, residual, jacobian, tol, options.max_iterations,
                      "synthetic mle");
}

std::pair<EstimateReport, ThetaHat> mipw_att_augmented(const AugmentedSample& augmented,
                                                       double delta,
                                                       const MipwOptions& options) {
  if (!(delta > 0.0 && delta < 1.0))
    throw BoundaryError("delta must lie strictly inside (0,1)");
  const ObservedSample& sample = augmented.original;
  const int n = sample.size();
  const double pi = sample.pi_hat();
  const double k = 1.0 - delta;

  PropensityFit mle = fit_logistic(sample);
  Eigen::VectorXd beta =
      fit_synthetic_mle(augmented.mixed_covariates, augmented.mixed_treatments, delta,
                        pi, mle.beta, options);

  ThetaHat theta;
  theta.beta = beta;
  theta.pi = pi;
  double y1_sum = 0.0;
  for (int i : sample.treated_indices()) y1_sum += sample.outcomes()[i];
  theta.mu1 = y1_sum / sample.treated_count();

  // Control rows are untouched by mixing, so the mu0 block runs over the
  // original controls with weights k * odds(X_i).
  const Eigen::VectorXd odds = control_odds(sample, beta);
  const auto& controls = sample.control_indices();
  Eigen::VectorXd yc(controls.size());
  for (std::size_t j = 0; j < controls.size(); ++j)
    yc[static_cast<Eigen::Index>(j)] = sample.outcomes()[controls[j]];
  theta.mu0 = hajek_weighted_mean(yc, odds);

  const Eigen::VectorXd stacked = psi_star_residual(theta, augmented, delta);
  if (stacked.norm() > 1e-8 * n)
    throw SolverError("psi-star stacked residual check failed: " +
                      std::to_string(stacked.norm()));

  EstimateReport report;
  report.estimand = "ATT";
  report.estimator = "mipw_augmented";
  report.delta = delta;
  report.point = theta.mu1 - theta.mu0;
  report.diagnostics = weight_diagnostics((k * odds.array()).matrix());
  return {report, theta};
}

Eigen::VectorXd psi_star_residual(const ThetaHat& theta, const AugmentedSample& augmented,
                                  double delta) {
  const ObservedSample& sample = augmented.original;
  const Eigen::MatrixXd design = with_intercept(augmented.mixed_covariates);
  const int n = sample.size();
  const int p = static_cast<int>(theta.beta.size());
  const double pi = theta.pi;
  const double k = 1.0 - delta;
  const double a = delta * pi / (1.0 - pi);

  Eigen::VectorXd out = Eigen::VectorXd::Zero(p + 3);
  const Eigen::VectorXd o_mixed = odds_vector(design, theta.beta);
  for (int i = 0; i < n; ++i) {
    const bool treated = augmented.mixed_treatments[i] == 1.0;
    const double o = o_mixed[i];
    const double u = k * o + a;
    const double t = treated ? k * o / (u * (1.0 + u)) : -k * o / (1.0 + u);
    out.head(p) += t * design.row(i);
    out[p] += sample.treatments()[i] - pi;
    out[p + 1] += sample.treatments()[i] * (sample.outcomes()[i] - theta.mu1);
    if (!treated) {
      // (e*/(1-e*) - delta*pi/(1-pi)) = u - a = k * o at the mixed covariates.
      out[p + 2] += k * o * (augmented.mixed_outcomes[i] - theta.mu0);
    }
  }
  return out;
}

Eigen::MatrixXd psi_mipw_rows(const ObservedSample& sample, const ThetaHat& theta,
                              double delta) {
  if (delta < 0.0 || delta >= 1.0)
    throw BoundaryError("delta must lie in [0,1) for the stacked system");
  const Eigen::MatrixXd design = with_intercept(sample.covariates());
  const int n = sample.size();
  const int p = static_cast<int>(theta.beta.size());
  const BetaBlock block{1.0 - delta, delta * theta.pi / (1.0 - theta.pi)};

  Eigen::MatrixXd rows(n, p + 3);
  const Eigen::VectorXd o = odds_vector(design, theta.beta);
  for (int i = 0; i < n; ++i) {
    const bool treated = sample.treatments()[i] == 1.0;
    rows.row(i).head(p) = block.phi(o[i], treated) * design.row(i);
    rows(i, p) = sample.treatments()[i] - theta.pi;
    rows(i, p + 1) = sample.treatments()[i] * (sample.outcomes()[i] - theta.mu1);
    rows(i, p + 2) = treated ? 0.0 : o[i] * (sample.outcomes()[i] - theta.mu0);
  }
  return rows;
}

Eigen::MatrixXd psi_ow_rows(const ObservedSample& sample, const ThetaHat& theta) {
  const Eigen::MatrixXd design = with_intercept(sample.covariates());
  const int n = sample.size();
  const int p = static_cast<int>(theta.beta.size());

  Eigen::MatrixXd rows(n, p + 3);
  const Eigen::VectorXd eta = design * theta.beta;
  for (int i = 0; i < n; ++i) {
    const double e = 1.0 / (1.0 + std::exp(-eta[i]));
    const double zi = sample.treatments()[i];
    const double yi = sample.outcomes()[i];
    rows.row(i).head(p) = (zi - e) * design.row(i);
    rows(i, p) = zi - theta.pi;
    rows(i, p + 1) = (1.0 - e) * zi * (yi - theta.mu1);
    rows(i, p + 2) = e * (1.0 - zi) * (yi - theta.mu0);
  }
  return rows;
}

ThetaHat ipw_theta(const ObservedSample& sample, const PropensityFit& fit) {
  ThetaHat theta;
  theta.beta = fit.beta;
  theta.pi = sample.pi_hat();
  double y1_sum = 0.0;
  for (int i : sample.treated_indices()) y1_sum += sample.outcomes()[i];
  theta.mu1 = y1_sum / sample.treated_count();
  const Eigen::VectorXd odds = control_odds(sample, fit.beta);
  const auto& controls = sample.control_indices();
  Eigen::VectorXd yc(controls.size());
  for (std::size_t j = 0; j < controls.size(); ++j)
    yc[static_cast<Eigen::Index>(j)] = sample.outcomes()[controls[j]];
  theta.mu0 = hajek_weighted_mean(yc, odds);
  return theta;
}

ThetaHat ow_theta(const ObservedSample& sample, const PropensityFit& fit) {
  ThetaHat theta;
  theta.beta = fit.beta;
  theta.pi = sample.pi_hat();
  double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
  for (int i = 0; i < sample.size(); ++i) {
    const double e = fit.fitted_probs[i];
    if (sample.treatments()[i] == 1.0) {
      num1 += (1.0 - e) * sample.outcomes()[i];
      den1 += 1.0 - e;
    } else {
      num0 += e * sample.outcomes()[i];
      den0 += e;
    }
  }
  if (den1 < 1e-300 || den0 < 1e-300)
    throw DegenerateWeightsError("degenerate overlap weight sums");
  theta.mu1 = num1 / den1;
  theta.mu0 = num0 / den0;
  return theta;
}

EstimateReport ow_ato(const ObservedSample& sample, const PropensityFit& fit) {
  if (!fit.converged) throw SolverError("ow_ato requires a converged propensity fit");
  double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
  Eigen::VectorXd control_w(sample.control_count());
  int ci = 0;
  for (int i = 0; i < sample.size(); ++i) {
    const double e = fit.fitted_probs[i];
    if (sample.treatments()[i] == 1.0) {
      num1 += (1.0 - e) * sample.outcomes()[i];
      den1 += 1.0 - e;
    } else {
      num0 += e * sample.outcomes()[i];
      den0 += e;
      control_w[ci++] = e;
    }
  }
  if (den1 < 1e-300 || den0 < 1e-300)
    throw DegenerateWeightsError("degenerate overlap weight sums");

  EstimateReport report;
  report.estimand = "ATO";
  report.estimator = "ow";
  report.point = num1 / den1 - num0 / den0;
  report.diagnostics = weight_diagnostics(control_w);
  return report;
}

}  // namespace mixest
