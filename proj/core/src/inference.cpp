#include "mixest/inference.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "mixest/errors.hpp"
#include "mixest/rng.hpp"

namespace mixest {

namespace {

Eigen::MatrixXd psi_rows_for(const ObservedSample& sample, const ThetaHat& theta,
                             const EstimatingSystem& system) {
  switch (system.kind) {
    case EstimatingSystem::Kind::ipw:
      return psi_mipw_rows(sample, theta, 0.0);
    case EstimatingSystem::Kind::mipw:
      return psi_mipw_rows(sample, theta, system.delta);
    case EstimatingSystem::Kind::ow:
      return psi_ow_rows(sample, theta);
  }
  throw SolverError("unknown estimating system");
}

}  // namespace

SandwichResult sandwich_se(const ObservedSample& sample, const ThetaHat& theta,
                           const EstimatingSystem& system) {
  const int n = sample.size();
  const int p = theta.dim();
  const int beta_len = static_cast<int>(theta.beta.size());
  const Eigen::VectorXd flat = theta.pack();

  auto mean_psi = [&](const Eigen::VectorXd& at) {
    const ThetaHat th = ThetaHat::unpack(at, beta_len);
    return (psi_rows_for(sample, th, system).colwise().sum() / n).transpose().eval();
  };

  // Bread by central differences, step h = cbrt(eps) * max(1, |theta_j|).
  const double base_h = std::cbrt(std::numeric_limits<double>::epsilon());
  Eigen::MatrixXd bread(p, p);
  for (int j = 0; j < p; ++j) {
    const double h = base_h * std::max(1.0, std::abs(flat[j]));
    Eigen::VectorXd up = flat, down = flat;
    up[j] += h;
    down[j] -= h;
    bread.col(j) = -(mean_psi(up) - mean_psi(down)) / (2.0 * h);
  }

  const Eigen::MatrixXd rows = psi_rows_for(sample, theta, system);
  Eigen::MatrixXd meat = rows.transpose() * rows / n;
  meat = 0.5 * (meat + meat.transpose());  // enforce exact symmetry

  Eigen::FullPivLU<Eigen::MatrixXd> lu(bread);
  if (!lu.isInvertible()) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(bread);
    const double cond =
        svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
    throw SingularSystemError("singular bread matrix, condition number " +
                              std::to_string(cond));
  }

  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  c[p - 2] = 1.0;
  c[p - 1] = -1.0;
  const Eigen::VectorXd a_inv_t_c = lu.transpose().solve(c);
  const double variance = a_inv_t_c.dot(meat * a_inv_t_c) / n;

  SandwichResult result;
  result.bread = bread;
  result.meat = meat;
  result.variance = variance;
  result.se = std::sqrt(std::max(0.0, variance));
  return result;
}

BootstrapResult bootstrap_se(const ObservedSample& sample, const EstimatorFn& estimator,
                             int B, std::uint64_t seed) {
  if (B < 2) throw ValidationError("bootstrap requires B >= 2");
  const int n = sample.size();

  std::vector<double> estimates;
  estimates.reserve(B);
  int failed = 0;
  for (int b = 0; b < B; ++b) {
    auto rng = derive_stream(seed, static_cast<std::uint64_t>(b));
    std::uniform_int_distribution<int> pick(0, n - 1);
    Eigen::VectorXd y(n), z(n);
    Eigen::MatrixXd x(n, sample.dim());
    for (int i = 0; i < n; ++i) {
      const int k = pick(rng);
      y[i] = sample.outcomes()[k];
      z[i] = sample.treatments()[k];
      x.row(i) = sample.covariates().row(k);
    }
    try {
      ObservedSample resampled(std::move(y), std::move(z), std::move(x),
                               sample.column_names());
      const std::uint64_t replicate_seed = splitmix64(seed ^ (0xb007ULL + b));
      estimates.push_back(estimator(resampled, replicate_seed));
    } catch (const Error&) {
      ++failed;
    }
  }
  if (failed > 0.20 * B)
    throw UnreliableBootstrapError("more than 20% of bootstrap replicates failed (" +
                                   std::to_string(failed) + "/" + std::to_string(B) +
                                   ")");

  BootstrapResult result;
  result.failed_count = failed;
  result.replicate_estimates =
      Eigen::Map<Eigen::VectorXd>(estimates.data(), estimates.size());
  const int m = static_cast<int>(estimates.size());
  const double mean = result.replicate_estimates.mean();
  double ss = 0.0;
  for (int i = 0; i < m; ++i) {
    const double d = result.replicate_estimates[i] - mean;
    ss += d * d;
  }
  result.se = m > 1 ? std::sqrt(ss / (m - 1)) : 0.0;
  return result;
}

}  // namespace mixest
