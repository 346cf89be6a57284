#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mixest/estimators.hpp"

namespace mixest {

enum class Overlap { strong, moderate, weak };

std::string to_string(Overlap overlap);
Overlap overlap_from_string(const std::string& name);

// Propensity coefficients (intercept first) for an overlap level.
Eigen::VectorXd overlap_beta(Overlap overlap);

struct ScenarioSpec {
  int n = 1000;
  Overlap overlap = Overlap::strong;
  bool misspecified = false;
  Eigen::VectorXd gamma;  // outcome coefficients, intercept first
  double tau = 1.0;
  std::vector<double> delta_grid;
  int replications = 500;
  std::uint64_t seed = 0;

  // Correct-model defaults: gamma = (2,2,2,0,1,-1), tau = 1, n = 1000,
  // delta grid 0.05..0.95 step 0.05. The misspecified variant swaps in
  // gamma = (-13.7, 27.4, 13.7, 13.7, 13.7, 13.7) and tau = 210.
  static ScenarioSpec defaults(Overlap overlap, bool misspecified = false);
};

// One simulated draw plus the latent quantities tests need.
struct GeneratedData {
  ObservedSample sample;
  Eigen::VectorXd potential_y1;
  Eigen::VectorXd potential_y0;
  Eigen::VectorXd true_propensity;
};

GeneratedData generate_full(const ScenarioSpec& spec, int rep_index);
ObservedSample generate(const ScenarioSpec& spec, int rep_index);

struct MonteCarloRow {
  std::string scenario;
  std::string overlap;
  double delta = std::numeric_limits<double>::quiet_NaN();
  std::string estimator;
  double mean_est = 0.0;
  double sd_est = 0.0;
  double mean_robust_se = std::numeric_limits<double>::quiet_NaN();
  int n_fail = 0;
  int n_ok = 0;
  bool flagged = false;  // >5% failures in the cell
};

struct MonteCarloTable {
  std::vector<MonteCarloRow> rows;
};

struct MonteCarloOptions {
  int mixing_replicates = 200;  // M for mipw_m / meb
  bool robust_se = true;        // compute sandwich SEs where defined
};

// Estimator names: ipw, mipw, mipw_m, ow, eb, meb, oracle (difference of
// simulated potential-outcome means among the treated).
MonteCarloTable run_monte_carlo(const ScenarioSpec& spec,
                                const std::vector<std::string>& estimators,
                                const MonteCarloOptions& options = {});

// Plug-in conditional variance of the IPW contrast given (X, Z).
double eq4_variance(const ObservedSample& sample,
                    const Eigen::VectorXd& true_propensities, double v1, double v0);

// Plain-text key=value scenario files.
ScenarioSpec load_scenario(const std::string& path);

void write_table_csv(const MonteCarloTable& table, const std::string& path,
                     std::uint64_t seed);

}  // namespace mixest
