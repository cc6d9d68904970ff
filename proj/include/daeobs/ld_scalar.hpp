#pragma once

// Forward-mode lexicographic directional derivative (LD-derivative)
// arithmetic. An LDScalar carries a value and one directional derivative
// per column of a directions matrix M. For C1 operations the chain rule
// applies column-wise; for min/max/abs the active branch is chosen by
// comparing the augmented rows (value, dirs...) lexicographically, which
// yields the LD-derivative f'(x0; M) of any composition.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace daeobs {

/// Sign of the first nonzero element of `seq`; 0 when all are zero or the
/// sequence is empty. Exact comparison, no tolerance.
int fsign(std::span<const double> seq);

class LDScalar {
 public:
  LDScalar() = default;

  /// A constant: `k` directions, all zero.
  explicit LDScalar(double value, std::size_t k = 0) : value_(value), dirs_(k, 0.0) {}

  LDScalar(double value, std::vector<double> dirs) : value_(value), dirs_(std::move(dirs)) {}

  /// Independent variable seeded with the given row of the directions matrix.
  static LDScalar seeded(double value, const Eigen::Ref<const Eigen::RowVectorXd>& row);

  double value() const { return value_; }
  std::span<const double> dirs() const { return dirs_; }
  std::span<double> dirs() { return dirs_; }
  std::size_t k() const { return dirs_.size(); }
  double dir(std::size_t j) const { return dirs_[j]; }

  bool operator==(const LDScalar&) const = default;

 private:
  double value_ = 0.0;
  std::vector<double> dirs_;
};

LDScalar operator-(const LDScalar& a);
LDScalar operator+(const LDScalar& a, const LDScalar& b);
LDScalar operator-(const LDScalar& a, const LDScalar& b);
LDScalar operator*(const LDScalar& a, const LDScalar& b);
LDScalar operator/(const LDScalar& a, const LDScalar& b);

LDScalar operator+(const LDScalar& a, double b);
LDScalar operator+(double a, const LDScalar& b);
LDScalar operator-(const LDScalar& a, double b);
LDScalar operator-(double a, const LDScalar& b);
LDScalar operator*(const LDScalar& a, double b);
LDScalar operator*(double a, const LDScalar& b);
LDScalar operator/(const LDScalar& a, double b);

/// Lexicographic min: returns the operand whose augmented row
/// (value, dirs...) is lexicographically smaller; ties go to `a`.
LDScalar ld_min(const LDScalar& a, const LDScalar& b);
/// -ld_min(-a, -b).
LDScalar ld_max(const LDScalar& a, const LDScalar& b);
/// ld_max(a, -a).
LDScalar ld_abs(const LDScalar& a);

LDScalar ld_exp(const LDScalar& a);
LDScalar ld_log(const LDScalar& a);
LDScalar ld_sqrt(const LDScalar& a);
LDScalar ld_sin(const LDScalar& a);
LDScalar ld_cos(const LDScalar& a);
LDScalar ld_pow(const LDScalar& base, const LDScalar& exponent);
LDScalar ld_pow(const LDScalar& base, double exponent);

// Plain-real counterparts with the same domain checks, so that generic code
// reports identical errors for both scalar kinds.
double checked_div(double a, double b);
double checked_log(double a);
double checked_sqrt(double a);
double checked_pow(double base, double exponent);

enum class RightInverseKind { square_inverse, drop_first_column };

/// Full-row-rank directions matrix M (n_x x k) with k in {n_x, n_x + 1}.
/// The [d I] form carries the drop-first-column right inverse [0; I].
class DirectionsMatrix {
 public:
  static DirectionsMatrix identity(int n);
  /// M = [d  I].
  static DirectionsMatrix probing(const Eigen::VectorXd& d);
  /// Any invertible square matrix.
  static DirectionsMatrix square(const Eigen::MatrixXd& m);

  const Eigen::MatrixXd& entries() const { return entries_; }
  RightInverseKind right_inverse_kind() const { return kind_; }
  int rows() const { return static_cast<int>(entries_.rows()); }
  int cols() const { return static_cast<int>(entries_.cols()); }

  /// R with M * R = I (k x n_x).
  const Eigen::MatrixXd& right_inverse() const { return right_inverse_; }

  /// First column of a probing matrix; empty for the square kind.
  Eigen::VectorXd probe() const;

 private:
  DirectionsMatrix(Eigen::MatrixXd entries, RightInverseKind kind, Eigen::MatrixXd right_inverse)
      : entries_(std::move(entries)), kind_(kind), right_inverse_(std::move(right_inverse)) {}

  Eigen::MatrixXd entries_;
  RightInverseKind kind_;
  Eigen::MatrixXd right_inverse_;
};

}  // namespace daeobs
