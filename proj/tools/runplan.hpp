#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixest/errors.hpp"

namespace mixest::cli {

class UsageError : public Error {
 public:
  using Error::Error;
};

enum class Command { estimate, sweep, simulate };

struct RunPlan {
  Command command = Command::estimate;

  // estimate / sweep inputs
  std::string input_path;
  std::string outcome_col = "Y";
  std::string treatment_col = "Z";
  char delimiter = ',';

  std::vector<std::string> estimators;
  std::optional<double> delta;
  std::vector<double> delta_grid;
  int mixing_replicates = 200;
  int bootstrap_replicates = 0;
  std::optional<std::uint64_t> seed;
  bool delta_nudge = false;

  // simulate inputs
  std::string scenario_path;
  std::string overlap = "strong";
  int n = 1000;
  int replications = 500;
  bool misspecified = false;

  std::string output_path;  // empty: stdout (estimate) / required (sweep, simulate)
  std::string svg_path;
};

RunPlan parse_args(const std::vector<std::string>& argv);

// Runs the plan; returns the process exit status. Writes a JSON report for
// single estimates and tidy CSV for sweeps and simulations.
int execute(const RunPlan& plan);

}  // namespace mixest::cli
