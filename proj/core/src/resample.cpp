#include "mixest/resample.hpp"

#include <cmath>

#include "mixest/errors.hpp"
#include "mixest/propensity.hpp"
#include "mixest/rng.hpp"

namespace mixest {

MixedReplicate mix_once(const ObservedSample& sample, double delta,
                        std::mt19937_64& rng) {
  if (!(delta > 0.0 && delta < 1.0))
    throw BoundaryError("delta must lie strictly inside (0,1)");

  Eigen::VectorXd mixed_outcomes = sample.outcomes();
  Eigen::MatrixXd mixed_covariates = sample.covariates();
  std::vector<int> kept, injected;

  const auto& controls = sample.control_indices();
  std::bernoulli_distribution flag(delta);
  std::uniform_int_distribution<std::size_t> pick(0, controls.size() - 1);
  for (int i : sample.treated_indices()) {
    if (flag(rng)) {
      const int src = controls[pick(rng)];
      mixed_outcomes[i] = sample.outcomes()[src];
      mixed_covariates.row(i) = sample.covariates().row(src);
      injected.push_back(src);
    } else {
      kept.push_back(i);
    }
  }
  return MixedReplicate{AugmentedSample{sample, std::move(mixed_outcomes),
                                        sample.treatments(),
                                        std::move(mixed_covariates)},
                        std::move(kept), std::move(injected)};
}

WeightSet mipw_m_weights(const ObservedSample& sample, double delta, int M,
                         std::uint64_t seed, const MipwMOptions& options) {
  if (M < 1) throw ValidationError("mixing replicate count M must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw BoundaryError("delta must lie strictly inside (0,1)");

  const double pi = sample.pi_hat();
  const PropensityFit warm = fit_logistic(sample);
  const int n_control = sample.control_count();

  Eigen::VectorXd accum = Eigen::VectorXd::Zero(n_control);
  int failed = 0;
  for (int m = 0; m < M; ++m) {
    auto rng = derive_stream(seed, static_cast<std::uint64_t>(m));
    MixedReplicate rep = mix_once(sample, delta, rng);
    try {
      const Eigen::VectorXd beta =
          fit_synthetic_mle(rep.dataset.mixed_covariates, rep.dataset.mixed_treatments,
                            delta, pi, warm.beta);
      // Adjusted weight at each original control unit:
      //   e*/(1-e*)(X_i; beta) - delta*pi/(1-pi) = (1-delta) * exp(x_i^T beta).
      accum += (1.0 - delta) * control_odds(sample, beta);
    } catch (const Error&) {
      ++failed;
    }
  }
  if (failed > options.max_failure_fraction * M)
    throw SolverError("too many mixing replicate fit failures (" +
                      std::to_string(failed) + "/" + std::to_string(M) + ")");
  const int ok = M - failed;
  return WeightSet::make(accum / ok, WeightProvenance::averaged);
}

EstimateReport mipw_m(const ObservedSample& sample, double delta, int M,
                      std::uint64_t seed, const MipwMOptions& options) {
  WeightSet weights = mipw_m_weights(sample, delta, M, seed, options);

  EstimateReport report;
  report.estimand = "ATT";
  report.estimator = "mipw_m";
  report.delta = delta;
  report.point = hajek_contrast(sample, weights);
  report.diagnostics.negative_weights = weights.negative_count;
  report.diagnostics.max_weight = weights.control_weights.maxCoeff();
  const double s = weights.control_weights.sum();
  const double s2 = weights.control_weights.squaredNorm();
  report.diagnostics.ess = s2 > 0.0 ? s * s / s2 : 0.0;
  return report;
}

}  // namespace mixest
