#include "mixest/balancing.hpp"

#include <cmath>
#include <cstdlib>

#include <Eigen/Dense>

#include "mixest/errors.hpp"
#include "mixest/resample.hpp"
#include "mixest/rng.hpp"

namespace mixest {

namespace {

Eigen::VectorXd covariate_scale(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd mean = x.colwise().mean();
  Eigen::VectorXd sd(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - mean[j]).square().sum() / (x.rows() - 1);
    sd[j] = std::sqrt(var);
    if (sd[j] < 1e-12) sd[j] = 1.0;
  }
  return sd;
}

Eigen::VectorXd control_outcomes(const ObservedSample& sample) {
  const auto& controls = sample.control_indices();
  Eigen::VectorXd yc(controls.size());
  for (std::size_t j = 0; j < controls.size(); ++j)
    yc[static_cast<Eigen::Index>(j)] = sample.outcomes()[controls[j]];
  return yc;
}

Eigen::MatrixXd control_covariates(const ObservedSample& sample) {
  const auto& controls = sample.control_indices();
  Eigen::MatrixXd xc(controls.size(), sample.dim());
  for (std::size_t j = 0; j < controls.size(); ++j)
    xc.row(static_cast<Eigen::Index>(j)) = sample.covariates().row(controls[j]);
  return xc;
}

}  // namespace

BalanceSolution eb_weights(const Eigen::MatrixXd& control_covariates,
                           const Eigen::VectorXd& treated_mean,
                           const Eigen::VectorXd& scale, double n_treated,
                           const BalanceOptions& options) {
  const Eigen::Index nc = control_covariates.rows();
  const Eigen::Index d = control_covariates.cols();
  if (treated_mean.size() != d || scale.size() != d)
    throw ValidationError("balance target dimension mismatch");

  // Standardized, target-centered control covariates; the dual gradient is
  // then exactly the vector of standardized imbalances.
  Eigen::MatrixXd c(nc, d);
  for (Eigen::Index j = 0; j < d; ++j)
    c.col(j) = (control_covariates.col(j).array() - treated_mean[j]) / scale[j];

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd q(nc);

  auto dual_value = [&](const Eigen::VectorXd& lam) {
    const Eigen::VectorXd eta = c * lam;
    const double m = eta.maxCoeff();
    return m + std::log((eta.array() - m).exp().sum());
  };
  auto softmax_into_q = [&](const Eigen::VectorXd& lam) {
    const Eigen::VectorXd eta = c * lam;
    const double m = eta.maxCoeff();
    q = (eta.array() - m).exp();
    q /= q.sum();
  };

  double value = dual_value(lambda);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    softmax_into_q(lambda);
    const Eigen::VectorXd grad = c.transpose() * q;
    const double imbalance = grad.lpNorm<Eigen::Infinity>();
    if (imbalance <= options.tol) {
      BalanceSolution out;
      // lambda on the raw covariate scale
      out.lambda = (lambda.array() / scale.array()).matrix();
      out.control_weights_odds_scale = q * n_treated;
      out.max_imbalance = imbalance;
      out.converged = true;
      return out;
    }

    Eigen::MatrixXd hessian = c.transpose() * q.asDiagonal() * c - grad * grad.transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    Eigen::VectorXd step;
    if (ldlt.info() == Eigen::Success) {
      step = ldlt.solve(-grad);
      if (!step.allFinite() || step.dot(grad) >= 0.0) step = -grad;
    } else {
      step = -grad;
    }

    double scale_step = 1.0;
    Eigen::VectorXd candidate = lambda + step;
    double candidate_value = dual_value(candidate);
    int halvings = 0;
    // Accept rounding-level non-decreases: near the optimum the attainable
    // decrease per Newton step (~ |grad|^2) drops below double precision long
    // before the gradient itself meets the balance tolerance.
    const double slack = 1e-14 * (1.0 + std::abs(value));
    while (candidate_value > value + slack && halvings < 60) {
      scale_step *= 0.5;
      candidate = lambda + scale_step * step;
      candidate_value = dual_value(candidate);
      ++halvings;
    }
    if (halvings == 60) break;  // no descent possible, treat as infeasible
    lambda = candidate;
    value = candidate_value;
    if (lambda.norm() > 1e4) break;  // dual diverging: target outside the hull
  }

  softmax_into_q(lambda);
  const Eigen::VectorXd grad = c.transpose() * q;
  Eigen::Index worst = 0;
  grad.cwiseAbs().maxCoeff(&worst);
  throw BalanceInfeasibleError(
      "entropy balancing did not converge; worst covariate index " +
      std::to_string(worst) + " with standardized imbalance " +
      std::to_string(std::abs(grad[worst])));
}

BalanceSolution eb_weights(const ObservedSample& sample, const BalanceOptions& options) {
  const auto& treated = sample.treated_indices();
  Eigen::VectorXd treated_mean = Eigen::VectorXd::Zero(sample.dim());
  for (int i : treated) treated_mean += sample.covariates().row(i).transpose();
  treated_mean /= sample.treated_count();

  const Eigen::VectorXd scale = covariate_scale(sample.covariates());
  try {
    return eb_weights(control_covariates(sample), treated_mean, scale,
                      sample.treated_count(), options);
  } catch (const BalanceInfeasibleError& e) {
    // Re-throw with the covariate named.
    std::string msg = e.what();
    const auto pos = msg.find("index ");
    if (pos != std::string::npos) {
      const int idx = std::atoi(msg.c_str() + pos + 6);
      if (idx >= 0 && idx < sample.dim())
        msg += " ('" + sample.column_names()[idx] + "')";
    }
    throw BalanceInfeasibleError(msg);
  }
}

EstimateReport eb_att(const ObservedSample& sample, const BalanceOptions& options) {
  BalanceSolution sol = eb_weights(sample, options);
  WeightSet ws = WeightSet::make(sol.control_weights_odds_scale, WeightProvenance::eb);

  EstimateReport report;
  report.estimand = "ATT";
  report.estimator = "eb";
  report.point = hajek_contrast(sample, ws);
  report.diagnostics.negative_weights = 0;
  report.diagnostics.max_weight = sol.control_weights_odds_scale.maxCoeff();
  const double s = sol.control_weights_odds_scale.sum();
  const double s2 = sol.control_weights_odds_scale.squaredNorm();
  report.diagnostics.ess = s * s / s2;
  return report;
}

double prop3_adjust(double w_star, double delta, double pi) {
  if (!(delta > 0.0 && delta < 1.0))
    throw BoundaryError("delta must lie strictly inside (0,1)");
  return (w_star - delta * pi / (1.0 - pi)) / (1.0 - delta);
}

EstimateReport mixed_eb(const ObservedSample& sample, double delta, int M,
                        std::uint64_t seed, const MixedEbOptions& options) {
  if (M < 1) throw ValidationError("mixing replicate count M must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw BoundaryError("delta must lie strictly inside (0,1)");

  const double pi = sample.pi_hat();
  const Eigen::MatrixXd xc = control_covariates(sample);
  const Eigen::VectorXd scale = covariate_scale(sample.covariates());
  const int nc = sample.control_count();

  Eigen::VectorXd accum = Eigen::VectorXd::Zero(nc);
  int failed = 0;
  for (int m = 0; m < M; ++m) {
    auto rng = derive_stream(seed, static_cast<std::uint64_t>(m));
    MixedReplicate rep = mix_once(sample, delta, rng);

    Eigen::VectorXd mixed_treated_mean = Eigen::VectorXd::Zero(sample.dim());
    for (int i : sample.treated_indices())
      mixed_treated_mean += rep.dataset.mixed_covariates.row(i).transpose();
    mixed_treated_mean /= sample.treated_count();

    try {
      BalanceSolution sol = eb_weights(xc, mixed_treated_mean, scale,
                                       sample.treated_count(), options.balance);
      for (int j = 0; j < nc; ++j)
        accum[j] += prop3_adjust(sol.control_weights_odds_scale[j], delta, pi);
    } catch (const BalanceInfeasibleError&) {
      ++failed;
    }
  }
  if (failed > options.max_failure_fraction * M)
    throw BalanceInfeasibleError("too many infeasible mixing replicates (" +
                                 std::to_string(failed) + "/" + std::to_string(M) + ")");
  const int ok = M - failed;
  Eigen::VectorXd averaged = accum / ok;
  WeightSet ws = WeightSet::make(averaged, WeightProvenance::mixed_eb);

  EstimateReport report;
  report.estimand = "ATT";
  report.estimator = "meb";
  report.delta = delta;
  report.point = hajek_contrast(sample, ws);
  report.diagnostics.negative_weights = ws.negative_count;
  report.diagnostics.max_weight = averaged.maxCoeff();
  const double s = averaged.sum();
  const double s2 = averaged.squaredNorm();
  report.diagnostics.ess = s2 > 0.0 ? s * s / s2 : 0.0;
  return report;
}

}  // namespace mixest
