#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mixest/inference.hpp"
#include "mixest/simulation.hpp"

using namespace mixest;

namespace {

ObservedSample permuted(const ObservedSample& sample, const std::vector<int>& order) {
  const int n = sample.size();
  Eigen::VectorXd y(n), z(n);
  Eigen::MatrixXd x(n, sample.dim());
  for (int i = 0; i < n; ++i) {
    y[i] = sample.outcomes()[order[i]];
    z[i] = sample.treatments()[order[i]];
    x.row(i) = sample.covariates().row(order[i]);
  }
  return ObservedSample(y, z, x, sample.column_names());
}

}  // namespace

TEST_CASE("sandwich se of the ipw contrast collapses sensibly on balanced data") {
  // With propensities fitted on covariates that carry no signal, the ipw
  // contrast is close to a difference in means and its sandwich SE must be
  // close to the two-sample standard error.
  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = 4000;
  Eigen::VectorXd y(n), z(n);
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) {
    z[i] = (i % 2 == 0) ? 1.0 : 0.0;
    x(i, 0) = gauss(rng);  // independent of z and y
    y[i] = gauss(rng);
  }
  ObservedSample sample(y, z, x, {"X1"});
  PropensityFit fit = fit_logistic(sample);
  ThetaHat theta = ipw_theta(sample, fit);
  SandwichResult sw = sandwich_se(sample, theta, EstimatingSystem::ipw());

  double v1 = 0.0, v0 = 0.0, m1 = 0.0, m0 = 0.0;
  for (int i = 0; i < n; ++i) (z[i] == 1.0 ? m1 : m0) += y[i];
  m1 /= n / 2.0;
  m0 /= n / 2.0;
  for (int i = 0; i < n; ++i) {
    const double d = y[i] - (z[i] == 1.0 ? m1 : m0);
    (z[i] == 1.0 ? v1 : v0) += d * d;
  }
  v1 /= n / 2.0;
  v0 /= n / 2.0;
  const double two_sample_se = std::sqrt(v1 / (n / 2.0) + v0 / (n / 2.0));
  CHECK(sw.se == doctest::Approx(two_sample_se).epsilon(0.15));
  CHECK(sw.variance == doctest::Approx(sw.se * sw.se).epsilon(1e-12));
}

TEST_CASE("sandwich bread matches a direct finite-difference Jacobian entry") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::moderate);
  spec.n = 500;
  spec.seed = 4;
  ObservedSample sample = generate(spec, 0);
  auto [report, theta] = mipw_att(sample, 0.4);
  (void)report;

  SandwichResult sw = sandwich_se(sample, theta, EstimatingSystem::mipw(0.4));
  const int dim = theta.dim();
  REQUIRE(sw.bread.rows() == dim);

  // Independent finite difference of the mean psi wrt mu0 (last coordinate):
  // only the mu0 row of psi depends on mu0, with slope -(mean control weight).
  const double h = 1e-6;
  Eigen::VectorXd flat = theta.pack();
  Eigen::VectorXd up = flat, dn = flat;
  up[dim - 1] += h;
  dn[dim - 1] -= h;
  Eigen::VectorXd mean_up =
      psi_mipw_rows(sample, ThetaHat::unpack(up, static_cast<int>(theta.beta.size())), 0.4)
          .colwise()
          .mean();
  Eigen::VectorXd mean_dn =
      psi_mipw_rows(sample, ThetaHat::unpack(dn, static_cast<int>(theta.beta.size())), 0.4)
          .colwise()
          .mean();
  const Eigen::VectorXd col = (mean_up - mean_dn) / (2.0 * h);
  for (int r = 0; r < dim; ++r)
    CHECK(sw.bread(r, dim - 1) == doctest::Approx(-col[r]).epsilon(1e-5).scale(1.0));
}

TEST_CASE("sandwich se is invariant under row permutation") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::moderate);
  spec.n = 400;
  spec.seed = 8;
  ObservedSample sample = generate(spec, 0);
  auto [report, theta] = mipw_att(sample, 0.3);
  (void)report;
  SandwichResult base = sandwich_se(sample, theta, EstimatingSystem::mipw(0.3));

  std::vector<int> order(sample.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(123);
  std::shuffle(order.begin(), order.end(), rng);
  ObservedSample shuffled = permuted(sample, order);
  auto [report2, theta2] = mipw_att(shuffled, 0.3);
  (void)report2;
  SandwichResult moved = sandwich_se(shuffled, theta2, EstimatingSystem::mipw(0.3));
  CHECK(moved.se == doctest::Approx(base.se).epsilon(1e-10));
}

TEST_CASE("mipw sandwich converges to the ipw sandwich as delta shrinks") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::strong);
  spec.n = 600;
  spec.seed = 12;
  ObservedSample sample = generate(spec, 0);

  PropensityFit fit = fit_logistic(sample);
  ThetaHat itheta = ipw_theta(sample, fit);
  SandwichResult ipw = sandwich_se(sample, itheta, EstimatingSystem::ipw());

  auto [report, theta] = mipw_att(sample, 1e-7);
  (void)report;
  SandwichResult mipw = sandwich_se(sample, theta, EstimatingSystem::mipw(1e-7));
  CHECK(mipw.se == doctest::Approx(ipw.se).epsilon(1e-5));
}

TEST_CASE("bootstrap of the sample-mean difference tracks its analytic SE") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::strong);
  spec.n = 1500;
  spec.seed = 33;
  ObservedSample sample = generate(spec, 0);

  auto diff_means = [](const ObservedSample& s, std::uint64_t) {
    double m1 = 0.0, m0 = 0.0;
    for (int i : s.treated_indices()) m1 += s.outcomes()[i];
    for (int i : s.control_indices()) m0 += s.outcomes()[i];
    return m1 / s.treated_count() - m0 / s.control_count();
  };
  BootstrapResult boot = bootstrap_se(sample, diff_means, 600, 2024);
  CHECK(boot.failed_count == 0);
  CHECK(static_cast<int>(boot.replicate_estimates.size()) == 600);

  double v1 = 0.0, v0 = 0.0, m1 = 0.0, m0 = 0.0;
  for (int i : sample.treated_indices()) m1 += sample.outcomes()[i];
  for (int i : sample.control_indices()) m0 += sample.outcomes()[i];
  m1 /= sample.treated_count();
  m0 /= sample.control_count();
  for (int i : sample.treated_indices()) v1 += std::pow(sample.outcomes()[i] - m1, 2);
  for (int i : sample.control_indices()) v0 += std::pow(sample.outcomes()[i] - m0, 2);
  v1 /= sample.treated_count() - 1;
  v0 /= sample.control_count() - 1;
  const double analytic = std::sqrt(v1 / sample.treated_count() + v0 / sample.control_count());
  CHECK(boot.se == doctest::Approx(analytic).epsilon(0.10));
}

TEST_CASE("bootstrap is deterministic in the seed and independent of B extension") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::moderate);
  spec.n = 300;
  spec.seed = 51;
  ObservedSample sample = generate(spec, 0);
  auto estimator = [](const ObservedSample& s, std::uint64_t) {
    return ipw_att(s, fit_logistic(s)).point;
  };
  BootstrapResult a = bootstrap_se(sample, estimator, 50, 7);
  BootstrapResult b = bootstrap_se(sample, estimator, 50, 7);
  CHECK((a.replicate_estimates - b.replicate_estimates).norm() == 0.0);
  CHECK(a.se == b.se);

  // replicate streams are derived per index, so a longer run reproduces the
  // shorter run's replicates as its prefix
  BootstrapResult c = bootstrap_se(sample, estimator, 80, 7);
  CHECK((c.replicate_estimates.head(50) - a.replicate_estimates).norm() == 0.0);

  BootstrapResult d = bootstrap_se(sample, estimator, 50, 8);
  CHECK(d.se != a.se);
}

TEST_CASE("bootstrap with B = 2 still returns a finite SE") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::moderate);
  spec.n = 200;
  spec.seed = 61;
  ObservedSample sample = generate(spec, 0);
  auto estimator = [](const ObservedSample& s, std::uint64_t) {
    return ipw_att(s, fit_logistic(s)).point;
  };
  BootstrapResult r = bootstrap_se(sample, estimator, 2, 3);
  CHECK(std::isfinite(r.se));
  CHECK(r.replicate_estimates.size() == 2);
}

TEST_CASE("bootstrap raises when too many replicates fail") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::moderate);
  spec.n = 200;
  spec.seed = 71;
  ObservedSample sample = generate(spec, 0);
  int counter = 0;
  auto flaky = [&counter](const ObservedSample&, std::uint64_t) -> double {
    if (++counter % 3 == 0) throw SolverError("synthetic failure");
    return 1.0;
  };
  CHECK_THROWS_AS(bootstrap_se(sample, flaky, 90, 5), UnreliableBootstrapError);

  counter = 0;
  auto rare = [&counter](const ObservedSample&, std::uint64_t) -> double {
    if (++counter % 10 == 0) throw SolverError("synthetic failure");
    return 1.0;
  };
  BootstrapResult r = bootstrap_se(sample, rare, 100, 5);
  CHECK(r.failed_count == 10);
  CHECK(static_cast<int>(r.replicate_estimates.size()) == 90);
}

TEST_CASE("ow sandwich runs and stays near the bootstrap of the same estimator") {
  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::weak);
  spec.n = 1200;
  spec.seed = 81;
  ObservedSample sample = generate(spec, 0);

  PropensityFit fit = fit_logistic(sample);
  ThetaHat theta = ow_theta(sample, fit);
  SandwichResult sw = sandwich_se(sample, theta, EstimatingSystem::ow());
  CHECK(std::isfinite(sw.se));
  CHECK(sw.se > 0.0);

  auto estimator = [](const ObservedSample& s, std::uint64_t) {
    return ow_ato(s, fit_logistic(s)).point;
  };
  BootstrapResult boot = bootstrap_se(sample, estimator, 300, 13);
  CHECK(sw.se == doctest::Approx(boot.se).epsilon(0.25));
}
