#include "daeobs/errors.hpp"

namespace daeobs {

namespace {

std::string located(const std::string& message, int line, int column) {
  if (line <= 0) return message;
  std::string out = "line " + std::to_string(line);
  if (column > 0) out += ", column " + std::to_string(column);
  return out + ": " + message;
}

}  // namespace

ParseError::ParseError(const std::string& message, int line, int column)
    : std::runtime_error(located(message, line, column)), line_(line), column_(column), detail_(message) {}

ConvergenceError::ConvergenceError(const std::string& message, double t, double residual)
    : NumericError(message + " (t = " + std::to_string(t) + ", residual = " + std::to_string(residual) + ")"),
      t_(t),
      residual_(residual) {}

RegularityError::RegularityError(const std::string& message, double t, double condition)
    : NumericError(message + " (t = " + std::to_string(t) + ", condition estimate = " +
                   std::to_string(condition) + ")"),
      t_(t),
      condition_(condition) {}

}  // namespace daeobs
