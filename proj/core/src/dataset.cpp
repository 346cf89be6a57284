#include "mixest/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <Eigen/QR>

namespace mixest {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, delimiter)) fields.push_back(field);
  if (!line.empty() && line.back() == delimiter) fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// Strict numeric parse; empty or non-numeric fields are treated as missing.
bool parse_double(const std::string& raw, double& out) {
  std::string s = trim(raw);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

ObservedSample::ObservedSample(Eigen::VectorXd outcomes, Eigen::VectorXd treatments,
                               Eigen::MatrixXd covariates,
                               std::vector<std::string> column_names)
    : outcomes_(std::move(outcomes)),
      treatments_(std::move(treatments)),
      covariates_(std::move(covariates)),
      column_names_(std::move(column_names)) {
  const auto n = outcomes_.size();
  if (n < 2) throw ValidationError("sample must contain at least 2 units");
  if (treatments_.size() != n || covariates_.rows() != n)
    throw ValidationError("outcome, treatment and covariate lengths disagree");
  if (static_cast<Eigen::Index>(column_names_.size()) != covariates_.cols())
    throw ValidationError("column name count does not match covariate columns");
  if (!outcomes_.allFinite() || !covariates_.allFinite())
    throw ValidationError("non-finite value in outcomes or covariates");
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = treatments_[i];
    if (z != 0.0 && z != 1.0)
      throw ValidationError("non-binary treatment at row " + std::to_string(i));
    if (z == 1.0)
      treated_.push_back(static_cast<int>(i));
    else
      control_.push_back(static_cast<int>(i));
  }
  if (treated_.empty()) throw ValidationError("no treated units");
  if (control_.empty()) throw ValidationError("no control units");
}

bool ObservedSample::rank_deficient() const {
  if (!rank_deficient_) {
    Eigen::MatrixXd design(covariates_.rows(), covariates_.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(covariates_.cols()) = covariates_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    rank_deficient_ = qr.rank() < design.cols();
  }
  return *rank_deficient_;
}

ObservedSample load_csv(const std::string& path, const std::string& outcome_col,
                        const std::string& treatment_col, char delimiter) {
  std::ifstream file(path);
  if (!file) throw ValidationError("cannot open file: " + path);

  std::string line;
  if (!std::getline(file, line)) throw ValidationError("empty file: " + path);
  auto header = split_line(line, delimiter);
  for (auto& h : header) h = trim(h);

  int outcome_idx = -1, treatment_idx = -1;
  std::vector<int> covariate_idx;
  std::vector<std::string> covariate_names;
  for (int j = 0; j < static_cast<int>(header.size()); ++j) {
    if (header[j] == outcome_col) {
      outcome_idx = j;
    } else if (header[j] == treatment_col) {
      treatment_idx = j;
    } else {
      covariate_idx.push_back(j);
      covariate_names.push_back(header[j]);
    }
  }
  if (outcome_idx < 0) throw ValidationError("outcome column not found: " + outcome_col);
  if (treatment_idx < 0)
    throw ValidationError("treatment column not found: " + treatment_col);

  std::vector<double> outcomes, treatments;
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(file, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_line(line, delimiter);
    if (fields.size() != header.size())
      throw ValidationError("row " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
    auto field_at = [&](int j) -> double {
      double v;
      if (!parse_double(fields[j], v))
        throw ValidationError("missing or non-numeric value at row " +
                              std::to_string(line_no) + ", column '" + header[j] + "'");
      return v;
    };
    outcomes.push_back(field_at(outcome_idx));
    const double z = field_at(treatment_idx);
    if (z != 0.0 && z != 1.0)
      throw ValidationError("non-binary treatment value at row " +
                            std::to_string(line_no));
    treatments.push_back(z);
    std::vector<double> row;
    row.reserve(covariate_idx.size());
    for (int j : covariate_idx) row.push_back(field_at(j));
    rows.push_back(std::move(row));
  }

  const int n = static_cast<int>(outcomes.size());
  const int d = static_cast<int>(covariate_idx.size());
  Eigen::VectorXd y(n), z(n);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    y[i] = outcomes[i];
    z[i] = treatments[i];
    for (int j = 0; j < d; ++j) x(i, j) = rows[i][j];
  }
  return ObservedSample(std::move(y), std::move(z), std::move(x),
                        std::move(covariate_names));
}

void write_csv(const ObservedSample& sample, const std::string& path,
               const std::string& outcome_col, const std::string& treatment_col,
               char delimiter) {
  std::ofstream file(path);
  if (!file) throw ValidationError("cannot open file for writing: " + path);
  file << outcome_col << delimiter << treatment_col;
  for (const auto& name : sample.column_names()) file << delimiter << name;
  file << '\n';
  for (int i = 0; i < sample.size(); ++i) {
    file << format_double(sample.outcomes()[i]) << delimiter
         << (sample.treatments()[i] == 1.0 ? '1' : '0');
    for (int j = 0; j < sample.dim(); ++j)
      file << delimiter << format_double(sample.covariates()(i, j));
    file << '\n';
  }
}

namespace {

OverlapSummary summarize_impl(const ObservedSample& sample,
                              const Eigen::VectorXd* fitted_probs) {
  OverlapSummary out;
  out.n = sample.size();
  out.n_treated = sample.treated_count();
  out.n_control = sample.control_count();
  out.pi_hat = sample.pi_hat();
  out.rank_deficient = sample.rank_deficient();

  const auto& x = sample.covariates();
  Eigen::VectorXd tm = Eigen::VectorXd::Zero(sample.dim());
  Eigen::VectorXd cm = Eigen::VectorXd::Zero(sample.dim());
  for (int i : sample.treated_indices()) tm += x.row(i).transpose();
  for (int i : sample.control_indices()) cm += x.row(i).transpose();
  out.treated_covariate_means = tm / out.n_treated;
  out.control_covariate_means = cm / out.n_control;

  if (fitted_probs) {
    if (fitted_probs->size() != sample.size())
      throw ValidationError("fitted propensity length does not match sample");
    out.has_propensity = true;
    out.treated_min_e = 1.0;
    out.control_min_e = 1.0;
    for (int i : sample.treated_indices()) {
      out.treated_min_e = std::min(out.treated_min_e, (*fitted_probs)[i]);
      out.treated_max_e = std::max(out.treated_max_e, (*fitted_probs)[i]);
    }
    for (int i : sample.control_indices()) {
      out.control_min_e = std::min(out.control_min_e, (*fitted_probs)[i]);
      out.control_max_e = std::max(out.control_max_e, (*fitted_probs)[i]);
    }
  }
  return out;
}

}  // namespace

OverlapSummary summarize(const ObservedSample& sample) {
  return summarize_impl(sample, nullptr);
}

OverlapSummary summarize(const ObservedSample& sample,
                         const Eigen::VectorXd& fitted_probs) {
  return summarize_impl(sample, &fitted_probs);
}

}  // namespace mixest
