#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace mixest {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input rejected before any computation (bad CSV, non-binary treatment, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Logistic fit diverged; carries the last iterate for diagnosis.
class SeparationError : public Error {
 public:
  SeparationError(const std::string& msg, Eigen::VectorXd last_beta, int iterations)
      : Error(msg), last_beta(std::move(last_beta)), iterations(iterations) {}
  Eigen::VectorXd last_beta;
  int iterations = 0;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class DegenerateWeightsError : public Error {
 public:
  using Error::Error;
};

// Singular bread matrix or singular identification denominator.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

class BalanceInfeasibleError : public Error {
 public:
  using Error::Error;
};

// Parameter at or outside an open-interval boundary (delta outside (0,1), ...).
class BoundaryError : public Error {
 public:
  using Error::Error;
};

class UnreliableBootstrapError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixest
