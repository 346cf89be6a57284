#include "mixest/simulation.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mixest/balancing.hpp"
#include "mixest/errors.hpp"
#include "mixest/inference.hpp"
#include "mixest/resample.hpp"
#include "mixest/rng.hpp"

namespace mixest {

std::string to_string(Overlap overlap) {
  switch (overlap) {
    case Overlap::strong: return "strong";
    case Overlap::moderate: return "moderate";
    case Overlap::weak: return "weak";
  }
  return "?";
}

Overlap overlap_from_string(const std::string& name) {
  if (name == "strong") return Overlap::strong;
  if (name == "moderate") return Overlap::moderate;
  if (name == "weak") return Overlap::weak;
  throw ValidationError("unknown overlap level: " + name);
}

Eigen::VectorXd overlap_beta(Overlap overlap) {
  Eigen::VectorXd beta(6);
  switch (overlap) {
    case Overlap::strong: beta << -0.5, 0.5, -0.5, 0.5, 0.5, 0.5; break;
    case Overlap::moderate: beta << -1.0, 1.0, -1.0, 0.5, -0.5, 0.5; break;
    case Overlap::weak: beta << -2.0, 2.0, -2.0, 1.0, 0.0, 0.0; break;
  }
  return beta;
}

ScenarioSpec ScenarioSpec::defaults(Overlap overlap, bool misspecified) {
  ScenarioSpec spec;
  spec.overlap = overlap;
  spec.misspecified = misspecified;
  spec.gamma.resize(6);
  if (misspecified) {
    spec.gamma << -13.7, 27.4, 13.7, 13.7, 13.7, 13.7;
    spec.tau = 210.0;
  } else {
    spec.gamma << 2.0, 2.0, 2.0, 0.0, 1.0, -1.0;
    spec.tau = 1.0;
  }
  spec.delta_grid.clear();
  for (int i = 1; i <= 19; ++i) spec.delta_grid.push_back(0.05 * i);
  return spec;
}

GeneratedData generate_full(const ScenarioSpec& spec, int rep_index) {
  const int n = spec.n;
  const int d = 5;
  const Eigen::VectorXd beta = overlap_beta(spec.overlap);
  if (spec.gamma.size() != d + 1)
    throw ValidationError("gamma must hold an intercept plus 5 slopes");

  auto rng = derive_stream(spec.seed, static_cast<std::uint64_t>(rep_index));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd z(n), e(n), y1(n), y0(n), y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = gauss(rng);
    double eta = beta[0];
    for (int j = 0; j < d; ++j) eta += beta[j + 1] * x(i, j);
    e[i] = 1.0 / (1.0 + std::exp(-eta));
    z[i] = unif(rng) < e[i] ? 1.0 : 0.0;
    double mean0 = spec.gamma[0];
    for (int j = 0; j < d; ++j) mean0 += spec.gamma[j + 1] * x(i, j);
    y0[i] = mean0 + gauss(rng);
    y1[i] = mean0 + spec.tau + gauss(rng);
    y[i] = z[i] == 1.0 ? y1[i] : y0[i];
  }

  Eigen::MatrixXd observed_x;
  std::vector<std::string> names;
  if (spec.misspecified) {
    // Kang-Schafer style transform: treatment and outcome follow the latent
    // covariates, but only the transformed ones are observed.
    observed_x.resize(n, d);
    for (int i = 0; i < n; ++i) {
      const double x1 = x(i, 0), x2 = x(i, 1), x3 = x(i, 2), x5 = x(i, 4);
      observed_x(i, 0) = std::exp(x1 / 2.0);
      observed_x(i, 1) = x2 / (1.0 + std::exp(x1)) + 10.0;
      observed_x(i, 2) = std::pow(x1 * x3 / 25.0 + 0.6, 3.0);
      observed_x(i, 3) = std::pow(x1 + x5 + 20.0, 2.0);
      observed_x(i, 4) = std::sqrt(std::abs(x3 - x5 + 1.0));
    }
    names = {"Xt1", "Xt2", "Xt3", "Xt4", "Xt5"};
  } else {
    observed_x = x;
    names = {"X1", "X2", "X3", "X4", "X5"};
  }

  GeneratedData out{
      ObservedSample(std::move(y), std::move(z), std::move(observed_x),
                     std::move(names)),
      std::move(y1), std::move(y0), std::move(e)};
  return out;
}

ObservedSample generate(const ScenarioSpec& spec, int rep_index) {
  return generate_full(spec, rep_index).sample;
}

double eq4_variance(const ObservedSample& sample,
                    const Eigen::VectorXd& true_propensities, double v1, double v0) {
  if (true_propensities.size() != sample.size())
    throw ValidationError("true propensity length does not match sample");
  double treated_count = 0.0, control_w = 0.0, control_w2 = 0.0;
  for (int i = 0; i < sample.size(); ++i) {
    const double e = true_propensities[i];
    if (sample.treatments()[i] == 1.0) {
      treated_count += 1.0;
    } else {
      const double w = e / (1.0 - e);
      control_w += w;
      control_w2 += w * w;
    }
  }
  return v1 * treated_count / (treated_count * treated_count) +
         v0 * control_w2 / (control_w * control_w);
}

namespace {

struct CellAccumulator {
  std::vector<double> estimates;
  std::vector<double> robust_ses;
  int failures = 0;
};

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(const std::vector<double>& values) {
  Moments m;
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / values.size();
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.sd = std::sqrt(ss / (values.size() - 1));
  }
  return m;
}

bool delta_dependent(const std::string& estimator) {
  return estimator == "mipw" || estimator == "mipw_m" || estimator == "meb";
}

}  // namespace

MonteCarloTable run_monte_carlo(const ScenarioSpec& spec,
                                const std::vector<std::string>& estimators,
                                const MonteCarloOptions& options) {
  if (estimators.empty()) throw ValidationError("no estimators selected");

  // Cell keys: (delta or NaN, estimator).
  struct Cell {
    double delta;
    std::string estimator;
    CellAccumulator acc;
  };
  std::vector<Cell> cells;
  for (const auto& est : estimators) {
    if (delta_dependent(est)) {
      for (double delta : spec.delta_grid) cells.push_back({delta, est, {}});
    } else {
      cells.push_back({std::numeric_limits<double>::quiet_NaN(), est, {}});
    }
  }

  for (int rep = 0; rep < spec.replications; ++rep) {
    GeneratedData data = generate_full(spec, rep);
    const std::uint64_t replicate_seed =
        splitmix64(spec.seed ^ (0x5151ULL + static_cast<std::uint64_t>(rep)));

    // Shared propensity fit for ipw/ow; failure counts against those cells.
    PropensityFit fit;
    bool fit_ok = true;
    try {
      fit = fit_logistic(data.sample);
    } catch (const Error&) {
      fit_ok = false;
    }

    for (auto& cell : cells) {
      try {
        if (cell.estimator == "oracle") {
          double sum = 0.0;
          for (int i : data.sample.treated_indices())
            sum += data.potential_y1[i] - data.potential_y0[i];
          cell.acc.estimates.push_back(sum / data.sample.treated_count());
        } else if (cell.estimator == "ipw") {
          if (!fit_ok) throw SolverError("propensity fit failed");
          cell.acc.estimates.push_back(ipw_att(data.sample, fit).point);
          if (options.robust_se)
            cell.acc.robust_ses.push_back(
                sandwich_se(data.sample, ipw_theta(data.sample, fit),
                            EstimatingSystem::ipw())
                    .se);
        } else if (cell.estimator == "ow") {
          if (!fit_ok) throw SolverError("propensity fit failed");
          cell.acc.estimates.push_back(ow_ato(data.sample, fit).point);
          if (options.robust_se)
            cell.acc.robust_ses.push_back(
                sandwich_se(data.sample, ow_theta(data.sample, fit),
                            EstimatingSystem::ow())
                    .se);
        } else if (cell.estimator == "mipw") {
          auto [report, theta] = mipw_att(data.sample, cell.delta);
          cell.acc.estimates.push_back(report.point);
          if (options.robust_se)
            cell.acc.robust_ses.push_back(
                sandwich_se(data.sample, theta, EstimatingSystem::mipw(cell.delta)).se);
        } else if (cell.estimator == "mipw_m") {
          cell.acc.estimates.push_back(
              mipw_m(data.sample, cell.delta, options.mixing_replicates, replicate_seed)
                  .point);
        } else if (cell.estimator == "eb") {
          cell.acc.estimates.push_back(eb_att(data.sample).point);
        } else if (cell.estimator == "meb") {
          cell.acc.estimates.push_back(
              mixed_eb(data.sample, cell.delta, options.mixing_replicates,
                       replicate_seed)
                  .point);
        } else {
          throw ValidationError("unknown estimator: " + cell.estimator);
        }
      } catch (const Error&) {
        ++cell.acc.failures;
      }
    }
  }

  MonteCarloTable table;
  const std::string scenario_label =
      to_string(spec.overlap) + (spec.misspecified ? "-misspecified" : "");
  for (const auto& cell : cells) {
    MonteCarloRow row;
    row.scenario = scenario_label;
    row.overlap = to_string(spec.overlap);
    row.delta = cell.delta;
    row.estimator = cell.estimator;
    const Moments m = moments(cell.acc.estimates);
    row.mean_est = m.mean;
    row.sd_est = m.sd;
    if (!cell.acc.robust_ses.empty()) row.mean_robust_se = moments(cell.acc.robust_ses).mean;
    row.n_fail = cell.acc.failures;
    row.n_ok = static_cast<int>(cell.acc.estimates.size());
    row.flagged = cell.acc.failures > 0.05 * spec.replications;
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    double start, stop, step;
    char c1, c2;
    std::istringstream ss(text);
    if (!(ss >> start >> c1 >> stop >> c2 >> step) || c1 != ':' || c2 != ':')
      throw ValidationError("bad grid syntax (want start:stop:step): " + text);
    if (step <= 0.0) throw ValidationError("grid step must be positive");
    for (double v = start; v <= stop + 1e-12; v += step) grid.push_back(v);
  } else {
    std::istringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) grid.push_back(std::stod(trim(token)));
  }
  for (double v : grid)
    if (!(v > 0.0 && v < 1.0))
      throw ValidationError("delta grid values must lie strictly inside (0,1)");
  return grid;
}

}  // namespace

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw ValidationError("cannot open scenario file: " + path);

  ScenarioSpec spec = ScenarioSpec::defaults(Overlap::strong);
  bool gamma_set = false, tau_set = false, misspec = false;
  std::string line;
  int line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ValidationError("scenario line " + std::to_string(line_no) +
                            " is not key=value");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key == "n") {
      spec.n = std::stoi(value);
    } else if (key == "overlap") {
      spec.overlap = overlap_from_string(value);
    } else if (key == "misspecified") {
      misspec = value == "1" || value == "true";
    } else if (key == "tau") {
      spec.tau = std::stod(value);
      tau_set = true;
    } else if (key == "gamma") {
      std::istringstream ss(value);
      std::string token;
      std::vector<double> g;
      while (std::getline(ss, token, ',')) g.push_back(std::stod(trim(token)));
      spec.gamma = Eigen::Map<Eigen::VectorXd>(g.data(), g.size());
      gamma_set = true;
    } else if (key == "delta_grid") {
      spec.delta_grid = parse_grid(value);
    } else if (key == "replications") {
      spec.replications = std::stoi(value);
    } else if (key == "seed") {
      spec.seed = std::stoull(value);
    } else {
      throw ValidationError("unknown scenario key: " + key);
    }
  }
  if (misspec) {
    const ScenarioSpec mis = ScenarioSpec::defaults(spec.overlap, true);
    spec.misspecified = true;
    if (!gamma_set) spec.gamma = mis.gamma;
    if (!tau_set) spec.tau = mis.tau;
  }
  return spec;
}

void write_table_csv(const MonteCarloTable& table, const std::string& path,
                     std::uint64_t seed) {
  std::ofstream file(path);
  if (!file) throw ValidationError("cannot open output file: " + path);
  file << "# seed=" << seed << "\n# version=" << kVersion << "\n";
  file << "scenario,overlap,delta,estimator,mean_est,sd_est,mean_robust_se,n_fail,flag\n";
  file.precision(10);
  for (const auto& row : table.rows) {
    file << row.scenario << ',' << row.overlap << ',';
    if (!std::isnan(row.delta)) file << row.delta;
    file << ',' << row.estimator << ',' << row.mean_est << ',' << row.sd_est << ',';
    if (!std::isnan(row.mean_robust_se)) file << row.mean_robust_se;
    file << ',' << row.n_fail << ',' << (row.flagged ? 1 : 0) << '\n';
  }
}

}  // namespace mixest
