#include "runplan.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixest/balancing.hpp"
#include "mixest/dataset.hpp"
#include "mixest/inference.hpp"
#include "mixest/resample.hpp"
#include "mixest/rng.hpp"
#include "mixest/simulation.hpp"
#include "svg.hpp"

namespace mixest::cli {

namespace {

const std::vector<std::string> kKnownEstimators = {"ipw",  "mipw", "mipw_m",
                                                   "ow",   "eb",   "meb"};

bool known_estimator(const std::string& name) {
  for (const auto& e : kKnownEstimators)
    if (e == name) return true;
  return false;
}

bool is_stochastic(const std::string& name) {
  return name == "mipw_m" || name == "meb";
}

std::vector<std::string> split_csv_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) out.push_back(token);
  return out;
}

std::vector<double> parse_delta_grid(const std::string& text) {
  std::vector<double> grid;
  double start, stop, step;
  char c1, c2;
  std::istringstream ss(text);
  if (!(ss >> start >> c1 >> stop >> c2 >> step) || c1 != ':' || c2 != ':' ||
      !(ss >> std::ws).eof())
    throw UsageError("bad --delta-grid syntax (want start:stop:step): " + text);
  if (step <= 0.0) throw UsageError("delta grid step must be positive");
  for (double v = start; v <= stop + 1e-12; v += step) grid.push_back(v);
  for (double v : grid)
    if (!(v > 1e-12 && v < 1.0 - 1e-12))
      throw UsageError("delta grid touches the (0,1) boundary");
  return grid;
}

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw UsageError("delta must lie strictly inside (0,1)");
}

}  // namespace

RunPlan parse_args(const std::vector<std::string>& argv) {
  CLI::App app{"mixing-based causal effect estimation"};
  app.require_subcommand(1);

  RunPlan plan;
  std::string estimator_list, delta_grid_text, delimiter_text = ",";
  double delta_value = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed_value = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--mixing-reps", plan.mixing_replicates,
                    "mixing replicates M for mipw_m/meb");
    sub->add_option("--seed", seed_value, "RNG seed");
    sub->add_option("--output", plan.output_path, "output file path");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--input", plan.input_path, "input CSV")->required();
    sub->add_option("--outcome-col", plan.outcome_col, "outcome column name");
    sub->add_option("--treatment-col", plan.treatment_col, "treatment column name");
    sub->add_option("--delimiter", delimiter_text, "CSV delimiter");
    sub->add_option("--estimator", estimator_list, "estimator(s), comma separated")
        ->required();
    sub->add_option("--boot", plan.bootstrap_replicates, "bootstrap replicates B");
    sub->add_flag("--delta-nudge", plan.delta_nudge,
                  "retry at delta -/+ 0.001 on solver failure");
  };

  CLI::App* estimate = app.add_subcommand("estimate", "single estimate on a CSV");
  add_data(estimate);
  add_common(estimate);
  CLI::Option* delta_opt = estimate->add_option("--delta", delta_value,
                                                "mixing proportion");
  CLI::Option* grid_opt_est =
      estimate->add_option("--delta-grid", delta_grid_text, "not valid for estimate");

  CLI::App* sweep = app.add_subcommand("sweep", "delta sweep on a CSV");
  add_data(sweep);
  add_common(sweep);
  sweep->add_option("--delta-grid", delta_grid_text, "start:stop:step")->required();
  sweep->add_option("--svg", plan.svg_path, "optional SE-vs-delta SVG chart");

  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo campaign");
  simulate->add_option("--scenario", plan.scenario_path, "scenario key=value file");
  simulate->add_option("--overlap", plan.overlap, "strong|moderate|weak");
  simulate->add_option("--n", plan.n, "sample size");
  simulate->add_option("--reps", plan.replications, "replications");
  simulate->add_flag("--misspecified", plan.misspecified, "Kang-Schafer covariates");
  simulate->add_option("--estimators", estimator_list, "estimators, comma separated");
  simulate->add_option("--delta-grid", delta_grid_text, "start:stop:step");
  simulate->add_option("--svg", plan.svg_path, "optional SD-vs-delta SVG chart");
  add_common(simulate);

  std::vector<std::string> args = argv;
  args.insert(args.begin(), "mixest");
  std::vector<const char*> cargs;
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  const bool has_seed = app.count_all() && (estimate->count("--seed") ||
                                            sweep->count("--seed") ||
                                            simulate->count("--seed"));
  if (delimiter_text.size() != 1) throw UsageError("delimiter must be one character");
  plan.delimiter = delimiter_text[0];

  if (estimate->parsed()) {
    plan.command = Command::estimate;
    if (delta_opt->count() && grid_opt_est->count())
      throw UsageError("--delta conflicts with --delta-grid");
    if (grid_opt_est->count())
      throw UsageError("estimate takes --delta, not --delta-grid");
    if (delta_opt->count()) {
      check_delta(delta_value);
      plan.delta = delta_value;
    }
  } else if (sweep->parsed()) {
    plan.command = Command::sweep;
    plan.delta_grid = parse_delta_grid(delta_grid_text);
    if (plan.output_path.empty()) throw UsageError("sweep requires --output");
  } else {
    plan.command = Command::simulate;
    if (!delta_grid_text.empty()) plan.delta_grid = parse_delta_grid(delta_grid_text);
    if (estimator_list.empty()) estimator_list = "ipw,mipw,ow";
    if (plan.output_path.empty()) throw UsageError("simulate requires --output");
    if (!has_seed) throw UsageError("simulate requires --seed");
    plan.seed = seed_value;
  }

  if (plan.command != Command::simulate) {
    plan.estimators = split_csv_list(estimator_list);
    for (const auto& e : plan.estimators)
      if (!known_estimator(e)) throw UsageError("unknown estimator: " + e);
    const bool needs_delta = [&] {
      for (const auto& e : plan.estimators)
        if (e == "mipw" || e == "mipw_m" || e == "meb") return true;
      return false;
    }();
    if (plan.command == Command::estimate && needs_delta && !plan.delta)
      throw UsageError("selected estimator requires --delta");
    bool stochastic = plan.bootstrap_replicates > 0;
    for (const auto& e : plan.estimators) stochastic = stochastic || is_stochastic(e);
    if (stochastic && !has_seed)
      throw UsageError("stochastic command requires --seed");
    if (has_seed) plan.seed = seed_value;
    if (plan.command == Command::estimate && plan.estimators.size() != 1)
      throw UsageError("estimate takes exactly one estimator");
  } else {
    plan.estimators = split_csv_list(estimator_list);
    for (const auto& e : plan.estimators)
      if (!known_estimator(e) && e != "oracle")
        throw UsageError("unknown estimator: " + e);
  }
  return plan;
}

namespace {

struct SweepRow {
  std::string estimator;
  double requested_delta = std::numeric_limits<double>::quiet_NaN();
  double used_delta = std::numeric_limits<double>::quiet_NaN();
  bool nudged = false;
  EstimateReport report;
};

EstimateReport run_one(const ObservedSample& sample, const std::string& estimator,
                       std::optional<double> delta, int M, std::uint64_t seed,
                       bool with_robust) {
  if (estimator == "ipw") {
    PropensityFit fit = fit_logistic(sample);
    EstimateReport report = ipw_att(sample, fit);
    if (with_robust)
      report.robust_se =
          sandwich_se(sample, ipw_theta(sample, fit), EstimatingSystem::ipw()).se;
    return report;
  }
  if (estimator == "ow") {
    PropensityFit fit = fit_logistic(sample);
    EstimateReport report = ow_ato(sample, fit);
    if (with_robust)
      report.robust_se =
          sandwich_se(sample, ow_theta(sample, fit), EstimatingSystem::ow()).se;
    return report;
  }
  if (estimator == "eb") return eb_att(sample);
  if (!delta) throw UsageError("estimator " + estimator + " requires --delta");
  if (estimator == "mipw") {
    auto [report, theta] = mipw_att(sample, *delta);
    if (with_robust)
      report.robust_se =
          sandwich_se(sample, theta, EstimatingSystem::mipw(*delta)).se;
    return report;
  }
  if (estimator == "mipw_m") return mipw_m(sample, *delta, M, seed);
  if (estimator == "meb") return mixed_eb(sample, *delta, M, seed);
  throw UsageError("unknown estimator: " + estimator);
}

EstimateReport run_with_nudge(const ObservedSample& sample, const std::string& estimator,
                              std::optional<double> delta, int M, std::uint64_t seed,
                              bool with_robust, bool allow_nudge, double& used_delta,
                              bool& nudged) {
  used_delta = delta.value_or(std::numeric_limits<double>::quiet_NaN());
  nudged = false;
  try {
    return run_one(sample, estimator, delta, M, seed, with_robust);
  } catch (const SolverError&) {
    if (!allow_nudge || !delta) throw;
  } catch (const BalanceInfeasibleError&) {
    if (!allow_nudge || !delta) throw;
  }
  for (double shifted : {*delta - 0.001, *delta + 0.001}) {
    if (!(shifted > 0.0 && shifted < 1.0)) continue;
    try {
      EstimateReport report = run_one(sample, estimator, shifted, M, seed, with_robust);
      used_delta = shifted;
      nudged = true;
      return report;
    } catch (const SolverError&) {
    } catch (const BalanceInfeasibleError&) {
    }
  }
  throw SolverError("estimator " + estimator + " failed at delta " +
                    std::to_string(*delta) + " and at both nudged values");
}

double bootstrap_point(const ObservedSample& sample, const std::string& estimator,
                       std::optional<double> delta, int M, std::uint64_t seed) {
  return run_one(sample, estimator, delta, M, seed, false).point;
}

nlohmann::json report_to_json(const EstimateReport& report, std::uint64_t seed) {
  nlohmann::json j;
  j["estimand"] = report.estimand;
  j["estimator"] = report.estimator;
  if (!std::isnan(report.delta)) j["delta"] = report.delta;
  j["point"] = report.point;
  if (report.robust_se) j["robust_se"] = *report.robust_se;
  if (report.boot_se) j["boot_se"] = *report.boot_se;
  j["diagnostics"] = {{"negative_weights", report.diagnostics.negative_weights},
                      {"max_weight", report.diagnostics.max_weight},
                      {"ess", report.diagnostics.ess}};
  if (!report.diagnostics.warnings.empty())
    j["diagnostics"]["warnings"] = report.diagnostics.warnings;
  j["seed"] = seed;
  j["version"] = kVersion;
  return j;
}

int execute_estimate(const RunPlan& plan) {
  ObservedSample sample = load_csv(plan.input_path, plan.outcome_col,
                                   plan.treatment_col, plan.delimiter);
  const std::uint64_t seed = plan.seed.value_or(0);
  const std::string& estimator = plan.estimators.front();
  double used_delta;
  bool nudged;
  EstimateReport report = run_with_nudge(sample, estimator, plan.delta,
                                         plan.mixing_replicates, seed, true,
                                         plan.delta_nudge, used_delta, nudged);
  if (plan.bootstrap_replicates > 0) {
    const int boot_m = std::min(plan.mixing_replicates, 50);
    BootstrapResult boot = bootstrap_se(
        sample,
        [&](const ObservedSample& s, std::uint64_t rep_seed) {
          return bootstrap_point(s, estimator, plan.delta, boot_m, rep_seed);
        },
        plan.bootstrap_replicates, seed);
    report.boot_se = boot.se;
  }
  nlohmann::json j = report_to_json(report, seed);
  if (nudged) j["delta_nudged_to"] = used_delta;
  if (plan.output_path.empty()) {
    std::cout << j.dump(2) << std::endl;
  } else {
    std::ofstream out(plan.output_path);
    if (!out) throw ValidationError("cannot open output: " + plan.output_path);
    out << j.dump(2) << '\n';
  }
  return 0;
}

int execute_sweep(const RunPlan& plan) {
  ObservedSample sample = load_csv(plan.input_path, plan.outcome_col,
                                   plan.treatment_col, plan.delimiter);
  const std::uint64_t seed = plan.seed.value_or(0);
  const int boot_m = std::min(plan.mixing_replicates, 50);

  std::vector<SweepRow> rows;
  for (const auto& estimator : plan.estimators) {
    const bool per_delta =
        estimator == "mipw" || estimator == "mipw_m" || estimator == "meb";
    std::vector<std::optional<double>> deltas;
    if (per_delta)
      for (double d : plan.delta_grid) deltas.emplace_back(d);
    else
      deltas.emplace_back(std::nullopt);

    for (const auto& delta : deltas) {
      SweepRow row;
      row.estimator = estimator;
      row.requested_delta = delta.value_or(std::numeric_limits<double>::quiet_NaN());
      row.report = run_with_nudge(sample, estimator, delta, plan.mixing_replicates,
                                  seed, true, plan.delta_nudge, row.used_delta,
                                  row.nudged);
      if (plan.bootstrap_replicates > 0) {
        const std::optional<double> used =
            delta ? std::optional<double>(row.used_delta) : std::nullopt;
        BootstrapResult boot = bootstrap_se(
            sample,
            [&](const ObservedSample& s, std::uint64_t rep_seed) {
              return bootstrap_point(s, estimator, used, boot_m, rep_seed);
            },
            plan.bootstrap_replicates, seed);
        row.report.boot_se = boot.se;
      }
      rows.push_back(std::move(row));
    }
  }

  std::ofstream out(plan.output_path);
  if (!out) throw ValidationError("cannot open output: " + plan.output_path);
  out << "# seed=" << seed << "\n# version=" << kVersion << "\n";
  out << "estimator,delta,point,robust_se,boot_se,negative_weights,max_weight,ess,"
         "nudged\n";
  out.precision(10);
  for (const auto& row : rows) {
    out << row.estimator << ',';
    if (!std::isnan(row.used_delta)) out << row.used_delta;
    out << ',' << row.report.point << ',';
    if (row.report.robust_se) out << *row.report.robust_se;
    out << ',';
    if (row.report.boot_se) out << *row.report.boot_se;
    out << ',' << row.report.diagnostics.negative_weights << ','
        << row.report.diagnostics.max_weight << ',' << row.report.diagnostics.ess
        << ',' << (row.nudged ? 1 : 0) << '\n';
  }

  if (!plan.svg_path.empty()) {
    std::vector<SvgSeries> series;
    for (const auto& estimator : plan.estimators) {
      SvgSeries s;
      s.label = estimator;
      std::optional<double> flat_se;
      for (const auto& row : rows) {
        if (row.estimator != estimator) continue;
        const double se = row.report.robust_se.value_or(
            row.report.boot_se.value_or(std::numeric_limits<double>::quiet_NaN()));
        if (std::isnan(row.used_delta)) {
          flat_se = se;
        } else {
          s.x.push_back(row.used_delta);
          s.y.push_back(se);
        }
      }
      if (flat_se && !plan.delta_grid.empty()) {
        for (double d : plan.delta_grid) {
          s.x.push_back(d);
          s.y.push_back(*flat_se);
        }
      }
      if (!s.x.empty()) series.push_back(std::move(s));
    }
    write_line_chart_svg(plan.svg_path, "standard error vs delta", "delta", "SE",
                         series);
  }
  return 0;
}

int execute_simulate(const RunPlan& plan) {
  ScenarioSpec spec;
  if (!plan.scenario_path.empty()) {
    spec = load_scenario(plan.scenario_path);
  } else {
    spec = ScenarioSpec::defaults(overlap_from_string(plan.overlap), plan.misspecified);
    spec.n = plan.n;
    spec.replications = plan.replications;
  }
  if (!plan.delta_grid.empty()) spec.delta_grid = plan.delta_grid;
  spec.seed = plan.seed.value_or(spec.seed);

  MonteCarloOptions options;
  options.mixing_replicates = plan.mixing_replicates;
  MonteCarloTable table = run_monte_carlo(spec, plan.estimators, options);
  write_table_csv(table, plan.output_path, spec.seed);

  if (!plan.svg_path.empty()) {
    std::vector<SvgSeries> series;
    for (const auto& estimator : plan.estimators) {
      SvgSeries s;
      s.label = estimator;
      std::optional<double> flat_sd;
      for (const auto& row : table.rows) {
        if (row.estimator != estimator) continue;
        if (std::isnan(row.delta))
          flat_sd = row.sd_est;
        else {
          s.x.push_back(row.delta);
          s.y.push_back(row.sd_est);
        }
      }
      if (flat_sd)
        for (double d : spec.delta_grid) {
          s.x.push_back(d);
          s.y.push_back(*flat_sd);
        }
      if (!s.x.empty()) series.push_back(std::move(s));
    }
    write_line_chart_svg(plan.svg_path, "Monte Carlo SD vs delta", "delta", "SD",
                         series);
  }
  return 0;
}

}  // namespace

int execute(const RunPlan& plan) {
  switch (plan.command) {
    case Command::estimate: return execute_estimate(plan);
    case Command::sweep: return execute_sweep(plan);
    case Command::simulate: return execute_simulate(plan);
  }
  return 1;
}

}  // namespace mixest::cli
