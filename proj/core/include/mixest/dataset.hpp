#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mixest/errors.hpp"

namespace mixest {

// Immutable observational sample (Y, Z, X). Validation happens at
// construction; afterwards the object is safe for concurrent shared reads.
class ObservedSample {
 public:
  ObservedSample(Eigen::VectorXd outcomes, Eigen::VectorXd treatments,
                 Eigen::MatrixXd covariates, std::vector<std::string> column_names);

  const Eigen::VectorXd& outcomes() const { return outcomes_; }
  const Eigen::VectorXd& treatments() const { return treatments_; }
  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const std::vector<std::string>& column_names() const { return column_names_; }

  int size() const { return static_cast<int>(outcomes_.size()); }
  int dim() const { return static_cast<int>(covariates_.cols()); }
  int treated_count() const { return static_cast<int>(treated_.size()); }
  int control_count() const { return static_cast<int>(control_.size()); }
  const std::vector<int>& treated_indices() const { return treated_; }
  const std::vector<int>& control_indices() const { return control_; }

  double pi_hat() const { return static_cast<double>(treated_count()) / size(); }

  // Lazy full-column-rank check of [1, X]; the result is cached.
  bool rank_deficient() const;

 private:
  Eigen::VectorXd outcomes_;
  Eigen::VectorXd treatments_;
  Eigen::MatrixXd covariates_;
  std::vector<std::string> column_names_;
  std::vector<int> treated_;
  std::vector<int> control_;
  mutable std::optional<bool> rank_deficient_;
};

// Original sample paired with one mixed draw. Control rows of the mixed
// arrays are always identical to the original control rows (h*_0 = h_0).
struct AugmentedSample {
  ObservedSample original;
  Eigen::VectorXd mixed_outcomes;
  Eigen::VectorXd mixed_treatments;
  Eigen::MatrixXd mixed_covariates;
};

struct OverlapSummary {
  int n = 0;
  int n_treated = 0;
  int n_control = 0;
  double pi_hat = 0.0;
  Eigen::VectorXd treated_covariate_means;
  Eigen::VectorXd control_covariate_means;
  bool rank_deficient = false;
  // Filled only when fitted propensities are supplied.
  bool has_propensity = false;
  double treated_min_e = 0.0, treated_max_e = 0.0;
  double control_min_e = 0.0, control_max_e = 0.0;
};

ObservedSample load_csv(const std::string& path, const std::string& outcome_col,
                        const std::string& treatment_col, char delimiter = ',');

void write_csv(const ObservedSample& sample, const std::string& path,
               const std::string& outcome_col = "Y",
               const std::string& treatment_col = "Z", char delimiter = ',');

OverlapSummary summarize(const ObservedSample& sample);
OverlapSummary summarize(const ObservedSample& sample,
                         const Eigen::VectorXd& fitted_probs);

}  // namespace mixest
