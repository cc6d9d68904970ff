#pragma once

#include <stdexcept>
#include <string>

namespace daeobs {

// Malformed model documents, expressions, or inconsistent model definitions.
// line/column are 1-based; 0 means unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, int line = 0, int column = 0);

  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& detail() const { return detail_; }

 private:
  int line_;
  int column_;
  std::string detail_;
};

// Base for every failure of a numerical procedure.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the domain of an elementary function (log of a
// non-positive number, division by zero, ...).
class DomainError : public NumericError {
 public:
  using NumericError::NumericError;
};

// A Newton-type iteration failed to reach its tolerance.
class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& message, double t, double residual);

  double time() const { return t_; }
  double residual() const { return residual_; }

 private:
  double t_;
  double residual_;
};

// The algebraic Jacobian is singular or too ill-conditioned: the solution
// is not regular (index-1 assumption violated).
class RegularityError : public NumericError {
 public:
  RegularityError(const std::string& message, double t, double condition);

  double time() const { return t_; }
  double condition() const { return condition_; }

 private:
  double t_;
  double condition_;
};

}  // namespace daeobs
