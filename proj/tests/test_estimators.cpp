#include <doctest.h>

#include <cmath>

#include "mixest/estimators.hpp"
#include "mixest/simulation.hpp"

using namespace mixest;

namespace {

ObservedSample tiny_sample() {
  Eigen::VectorXd y(4), z(4);
  Eigen::MatrixXd x(4, 1);
  y << 2, 4, 1, 3;
  z << 1, 1, 0, 0;
  x << 0.1, 0.2, 0.3, 0.4;
  return ObservedSample(y, z, x, {"X1"});
}

PropensityFit fixed_fit(Eigen::VectorXd probs) {
  PropensityFit fit;
  fit.beta = Eigen::VectorXd::Zero(2);
  fit.fitted_probs = std::move(probs);
  fit.converged = true;
  return fit;
}

}  // namespace

TEST_CASE("hajek_contrast hand values") {
  ObservedSample sample = tiny_sample();
  Eigen::VectorXd w(2);

  // uniform control weights: 3 - 2 = 1
  w << 1, 1;
  CHECK(hajek_contrast(sample, WeightSet::make(w, WeightProvenance::model)) ==
        doctest::Approx(1.0).epsilon(1e-14));

  // weights (1, 3): control mean (1 + 9)/4 = 2.5 -> contrast 0.5
  w << 1, 3;
  CHECK(hajek_contrast(sample, WeightSet::make(w, WeightProvenance::model)) ==
        doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("hajek_contrast is invariant to rescaling the control weights") {
  ObservedSample sample = tiny_sample();
  Eigen::VectorXd w(2);
  w << 0.7, 2.9;
  const double base = hajek_contrast(sample, WeightSet::make(w, WeightProvenance::model));
  for (double scale : {1e-6, 0.5, 3.0, 1e8}) {
    const double scaled =
        hajek_contrast(sample, WeightSet::make(scale * w, WeightProvenance::model));
    CHECK(scaled == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("hajek_contrast rejects a zero weight sum") {
  ObservedSample sample = tiny_sample();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(hajek_contrast(sample, WeightSet::make(w, WeightProvenance::model)),
                  DegenerateWeightsError);
}

TEST_CASE("WeightSet::make rejects negatives for model-based weights") {
  Eigen::VectorXd w(2);
  w << 1.0, -0.5;
  CHECK_THROWS_AS(WeightSet::make(w, WeightProvenance::model), ValidationError);
  WeightSet ws = WeightSet::make(w, WeightProvenance::mixed_eb);
  CHECK(ws.negative_count == 1);
}

TEST_CASE("ipw_att hand value with fixed coefficients") {
  // treated odds never enter; control odds exp(x^T beta) weight the control
  // mean. Controls sit at x = 0.3 and 0.4; pick beta giving odds 1 and 4.
  ObservedSample sample = tiny_sample();
  PropensityFit fit = fixed_fit(Eigen::VectorXd::Constant(4, 0.5));
  const double b1 = std::log(4.0) / 0.1;
  fit.beta << -0.3 * b1, b1;
  EstimateReport report = ipw_att(sample, fit);
  // treated mean 3; control weighted mean (1*1 + 4*3)/5 = 2.6
  CHECK(report.point == doctest::Approx(3.0 - 2.6).epsilon(1e-12));
  CHECK(report.estimand == "ATT");
  CHECK(report.diagnostics.negative_weights == 0);
  CHECK(report.diagnostics.max_weight == doctest::Approx(4.0));
}

TEST_CASE("ipw_att flags extreme control odds") {
  ObservedSample sample = tiny_sample();
  PropensityFit fit = fixed_fit(Eigen::VectorXd::Constant(4, 0.5));
  const double b1 = std::log(9999.0) / 0.1;  // odds 9999 at the x = 0.4 control
  fit.beta << -0.3 * b1, b1;
  EstimateReport report = ipw_att(sample, fit);
  REQUIRE(report.diagnostics.warnings.size() == 1);
  CHECK(report.diagnostics.warnings[0].find("extreme") != std::string::npos);
}

TEST_CASE("ow_ato hand value with fixed propensities") {
  ObservedSample sample = tiny_sample();
  Eigen::VectorXd e(4);
  e << 0.8, 0.5, 0.4, 0.2;
  EstimateReport report = ow_ato(sample, fixed_fit(e));
  // treated: (0.2*2 + 0.5*4)/0.7 ; control: (0.4*1 + 0.2*3)/0.6
  const double expected = 2.4 / 0.7 - 1.0 / 0.6;
  CHECK(report.point == doctest::Approx(expected).epsilon(1e-14));
  CHECK(report.estimand == "ATO");
}

TEST_CASE("ThetaHat pack/unpack round-trip") {
  ThetaHat theta;
  theta.beta = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  theta.pi = 0.3;
  theta.mu1 = 1.5;
  theta.mu0 = -0.5;
  Eigen::VectorXd flat = theta.pack();
  REQUIRE(flat.size() == 7);
  ThetaHat back = ThetaHat::unpack(flat, 4);
  CHECK((back.beta - theta.beta).norm() == 0.0);
  CHECK(back.pi == theta.pi);
  CHECK(back.mu1 == theta.mu1);
  CHECK(back.mu0 == theta.mu0);
}

TEST_CASE("mipw point estimate equals the odds-weighted contrast at its own beta") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::moderate);
  spec.n = 600;
  spec.seed = 21;
  ObservedSample sample = generate(spec, 0);

  auto [report, theta] = mipw_att(sample, 0.4);
  Eigen::VectorXd odds = control_odds(sample, theta.beta);
  WeightSet ws = WeightSet::make(odds, WeightProvenance::mixed_model);
  CHECK(report.point == doctest::Approx(hajek_contrast(sample, ws)).epsilon(1e-12));
  CHECK(theta.pi == doctest::Approx(sample.pi_hat()).epsilon(1e-15));
}

TEST_CASE("mipw stacked residual vanishes at the reported solution") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::weak);
  spec.n = 800;
  spec.seed = 5;
  ObservedSample sample = generate(spec, 1);

  for (double delta : {0.1, 0.5, 0.9}) {
    auto [report, theta] = mipw_att(sample, delta);
    Eigen::MatrixXd rows = psi_mipw_rows(sample, theta, delta);
    Eigen::VectorXd stacked = rows.colwise().sum();
    CHECK(stacked.norm() <= 1e-8 * sample.size());
    (void)report;
  }
}

TEST_CASE("mipw approaches ipw as delta shrinks to zero") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::moderate);
  spec.n = 500;
  spec.seed = 9;
  ObservedSample sample = generate(spec, 0);

  PropensityFit mle = fit_logistic(sample);
  EstimateReport ipw = ipw_att(sample, mle);
  auto [mipw_small, theta_small] = mipw_att(sample, 1e-6);
  CHECK(mipw_small.point == doctest::Approx(ipw.point).epsilon(1e-4));
  CHECK((theta_small.beta - mle.beta).norm() < 1e-4);

  // and the gap shrinks with delta
  auto [mipw_mid, theta_mid] = mipw_att(sample, 1e-3);
  CHECK(std::abs(mipw_small.point - ipw.point) <
        std::abs(mipw_mid.point - ipw.point) + 1e-12);
  (void)theta_mid;
}

TEST_CASE("the mipw system at delta = 0 reproduces the logistic score rows") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::strong);
  spec.n = 300;
  spec.seed = 13;
  ObservedSample sample = generate(spec, 2);

  PropensityFit mle = fit_logistic(sample);
  ThetaHat theta = ipw_theta(sample, mle);
  Eigen::MatrixXd rows = psi_mipw_rows(sample, theta, 0.0);

  // beta block columns: (z - e) * [1, x]
  const int p = sample.dim();
  for (int i = 0; i < sample.size(); ++i) {
    const double resid = sample.treatments()[i] - mle.fitted_probs[i];
    CHECK(rows(i, 0) == doctest::Approx(resid).epsilon(1e-10));
    for (int j = 0; j < p; ++j)
      CHECK(rows(i, 1 + j) ==
            doctest::Approx(resid * sample.covariates()(i, j)).epsilon(1e-10));
  }
  // stacked score is ~0 at the MLE
  CHECK(rows.colwise().sum().norm() < 1e-6);
}

TEST_CASE("augmented-system residual vanishes at the augmented solution") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::moderate);
  spec.n = 700;
  spec.seed = 31;
  ObservedSample sample = generate(spec, 0);

  // deterministic mixed draw: replace every third treated unit by a control row
  Eigen::VectorXd my = sample.outcomes();
  Eigen::VectorXd mz = sample.treatments();
  Eigen::MatrixXd mx = sample.covariates();
  const auto& treated = sample.treated_indices();
  const auto& control = sample.control_indices();
  for (std::size_t t = 0; t < treated.size(); t += 3) {
    const int src = control[t % control.size()];
    my[treated[t]] = sample.outcomes()[src];
    mx.row(treated[t]) = sample.covariates().row(src);
  }
  AugmentedSample augmented{sample, my, mz, mx};

  const double delta = 0.35;
  auto [report, theta] = mipw_att_augmented(augmented, delta);
  Eigen::VectorXd resid = psi_star_residual(theta, augmented, delta);
  CHECK(resid.norm() <= 1e-8 * sample.size());
  CHECK(std::isfinite(report.point));
}

TEST_CASE("fit_synthetic_mle reduces to the logistic MLE for tiny delta") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::moderate);
  spec.n = 400;
  spec.seed = 17;
  ObservedSample sample = generate(spec, 0);

  PropensityFit mle = fit_logistic(sample);
  Eigen::VectorXd beta = fit_synthetic_mle(sample.covariates(), sample.treatments(),
                                           1e-8, sample.pi_hat(), mle.beta);
  CHECK((beta - mle.beta).norm() < 1e-5);
}

TEST_CASE("mipw is consistent for the ATT on correctly specified data") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::strong);
  spec.n = 4000;
  spec.seed = 77;

  const int reps = 30;
  double acc = 0.0;
  for (int r = 0; r < reps; ++r) {
    ObservedSample sample = generate(spec, r);
    auto [report, theta] = mipw_att(sample, 0.3);
    acc += report.point;
    (void)theta;
  }
  CHECK(acc / reps == doctest::Approx(spec.tau).epsilon(0.08));
}

TEST_CASE("mipw rejects delta outside the open unit interval") {
  ObservedSample sample = tiny_sample();
  CHECK_THROWS_AS(mipw_att(sample, 0.0), BoundaryError);
  CHECK_THROWS_AS(mipw_att(sample, 1.0), BoundaryError);
}
