#include "mixest/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "mixest/errors.hpp"

namespace mixest {

namespace {

constexpr double kScoreTol = 1e-10;
constexpr int kMaxIterations = 100;
constexpr double kDivergenceNorm = 1e6;

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design;
}

}  // namespace

MixSpec MixSpec::simple(double delta, double pi) {
  if (!(delta > 0.0 && delta < 1.0))
    throw BoundaryError("delta must lie strictly inside (0,1)");
  if (!(pi > 0.0 && pi < 1.0))
    throw BoundaryError("pi must lie strictly inside (0,1)");
  MixSpec spec;
  spec.delta = delta;
  spec.pi_star = pi;
  spec.theta1 = 1.0 - delta;
  spec.theta0 = 0.0;
  return spec;
}

double logistic_log_likelihood(const Eigen::MatrixXd& covariates,
                               const Eigen::VectorXd& treatments,
                               const Eigen::VectorXd& beta) {
  const Eigen::MatrixXd design = with_intercept(covariates);
  const Eigen::VectorXd eta = design * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // z*eta - log(1+exp(eta)), stable for both signs of eta
    const double e = eta[i];
    ll += treatments[i] * e - (e > 0 ? e + std::log1p(std::exp(-e))
                                     : std::log1p(std::exp(e)));
  }
  return ll;
}

PropensityFit fit_logistic(const Eigen::MatrixXd& covariates,
                           const Eigen::VectorXd& treatments) {
  const Eigen::MatrixXd design = with_intercept(covariates);
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = logistic_log_likelihood(covariates, treatments, beta);

  auto probs_at = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd eta = design * b;
    return (1.0 / (1.0 + (-eta.array()).exp())).matrix().eval();
  };

  int iter = 0;
  for (; iter < kMaxIterations; ++iter) {
    const Eigen::VectorXd probs = probs_at(beta);
    const Eigen::VectorXd score = design.transpose() * (treatments - probs);
    if (score.norm() < kScoreTol) {
      // The score also vanishes when the classes are perfectly separated and
      // the coefficients have run off to infinity: every unit then sits on
      // its own side with a huge margin. A maximizer with any unit near the
      // boundary is a genuine interior MLE.
      const Eigen::VectorXd eta = design * beta;
      double min_margin = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < eta.size(); ++i)
        min_margin = std::min(min_margin,
                              treatments[i] == 1.0 ? eta[i] : -eta[i]);
      if (min_margin > 10.0)
        throw SeparationError(
            "separation suspected: all units perfectly classified with extreme "
            "margins",
            beta, iter);
      PropensityFit fit;
      fit.beta = beta;
      fit.fitted_probs = probs;
      fit.log_likelihood = ll;
      fit.converged = true;
      fit.iterations = iter;
      return fit;
    }
    const Eigen::VectorXd w = probs.array() * (1.0 - probs.array());
    const Eigen::MatrixXd hessian = design.transpose() * w.asDiagonal() * design;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    if (ldlt.info() != Eigen::Success)
      throw SeparationError("separation suspected: singular logistic information matrix",
                            beta, iter);
    Eigen::VectorXd step = ldlt.solve(score);

    double step_scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double candidate_ll = logistic_log_likelihood(covariates, treatments, candidate);
    int halvings = 0;
    // Allow rounding-level decreases so the search cannot stall on the
    // flat region around the maximizer.
    const double slack = 1e-10 * (1.0 + std::abs(ll));
    while (candidate_ll < ll - slack && halvings < 40) {
      step_scale *= 0.5;
      candidate = beta + step_scale * step;
      candidate_ll = logistic_log_likelihood(covariates, treatments, candidate);
      ++halvings;
    }
    beta = candidate;
    ll = candidate_ll;
    if (beta.norm() > kDivergenceNorm)
      throw SeparationError("separation suspected: coefficient norm exceeded 1e6", beta,
                            iter);
    (void)n;
  }
  throw SeparationError(
      "separation suspected: logistic fit did not converge in 100 iterations", beta,
      iter);
}

PropensityFit fit_logistic(const ObservedSample& sample) {
  return fit_logistic(sample.covariates(), sample.treatments());
}

double simple_mixed_odds(double odds, double delta, double pi) {
  if (!(delta > 0.0 && delta < 1.0))
    throw BoundaryError("delta must lie strictly inside (0,1)");
  if (!(pi > 0.0 && pi < 1.0))
    throw BoundaryError("pi must lie strictly inside (0,1)");
  if (!std::isfinite(odds) || odds < 0.0)
    throw ValidationError("odds must be finite and nonnegative");
  return (1.0 - delta) * odds + delta * pi / (1.0 - pi);
}

Eigen::VectorXd simple_mixed_odds(const Eigen::VectorXd& odds, double delta, double pi) {
  Eigen::VectorXd out(odds.size());
  for (Eigen::Index i = 0; i < odds.size(); ++i)
    out[i] = simple_mixed_odds(odds[i], delta, pi);
  return out;
}

Eigen::VectorXd simple_mixed_odds(const Eigen::VectorXd& odds,
                                  const Eigen::VectorXd& per_unit_delta, double pi) {
  if (odds.size() != per_unit_delta.size())
    throw ValidationError("per-unit delta length does not match odds length");
  Eigen::VectorXd out(odds.size());
  for (Eigen::Index i = 0; i < odds.size(); ++i)
    out[i] = simple_mixed_odds(odds[i], per_unit_delta[i], pi);
  return out;
}

double general_mixed_odds(double odds, const MixSpec& mix, double pi) {
  if (!(pi > 0.0 && pi < 1.0))
    throw BoundaryError("pi must lie strictly inside (0,1)");
  const double marginal_odds = pi / (1.0 - pi);
  const double numerator = mix.theta1 * odds + (1.0 - mix.theta1) * marginal_odds;
  const double denominator = mix.theta0 * odds + (1.0 - mix.theta0) * marginal_odds;
  if (denominator <= 0.0)
    throw SolverError("degenerate mixing: nonpositive denominator in synthetic odds");
  const double star_odds = mix.pi_star / (1.0 - mix.pi_star);
  return star_odds * numerator / denominator;
}

std::pair<double, double> identification_weights(double odds_star, const MixSpec& mix,
                                                 double pi) {
  if (mix.theta0 == mix.theta1)
    throw ValidationError("identification requires theta0 != theta1");
  const double marginal_odds = pi / (1.0 - pi);
  const double star_marginal = mix.pi_star / (1.0 - mix.pi_star);
  const double denominator = mix.theta0 * odds_star - mix.theta1 * star_marginal;
  if (std::abs(denominator) < 1e-12)
    throw SingularSystemError("singular identification denominator");
  const double common = marginal_odds *
                        ((1.0 - mix.theta1) * star_marginal -
                         (1.0 - mix.theta0) * odds_star) /
                        denominator;
  const double ratio = 1.0 / (mix.theta0 - mix.theta1);
  return {mix.theta0 * ratio * common, mix.theta1 * ratio * common};
}

}  // namespace mixest
