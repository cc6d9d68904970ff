#include "daeobs/ld_scalar.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "daeobs/errors.hpp"

namespace daeobs {

namespace {

void require_same_k(const LDScalar& a, const LDScalar& b) {
  if (a.k() != b.k()) {
    throw std::invalid_argument("LDScalar direction count mismatch: " + std::to_string(a.k()) + " vs " +
                                std::to_string(b.k()));
  }
}

// result.dirs = sa * a.dirs + sb * b.dirs
LDScalar combine(double value, double sa, const LDScalar& a, double sb, const LDScalar& b) {
  require_same_k(a, b);
  std::vector<double> d(a.k());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = sa * a.dir(i) + sb * b.dir(i);
  return {value, std::move(d)};
}

LDScalar scaled(double value, double s, const LDScalar& a) {
  std::vector<double> d(a.k());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = s * a.dir(i);
  return {value, std::move(d)};
}

bool all_zero(std::span<const double> v) {
  for (double e : v) {
    if (e != 0.0) return false;
  }
  return true;
}

}  // namespace

int fsign(std::span<const double> seq) {
  for (double e : seq) {
    if (e > 0.0) return 1;
    if (e < 0.0) return -1;
  }
  return 0;
}

LDScalar LDScalar::seeded(double value, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  return {value, std::vector<double>(row.data(), row.data() + row.size())};
}

LDScalar operator-(const LDScalar& a) { return scaled(-a.value(), -1.0, a); }

LDScalar operator+(const LDScalar& a, const LDScalar& b) { return combine(a.value() + b.value(), 1.0, a, 1.0, b); }

LDScalar operator-(const LDScalar& a, const LDScalar& b) { return combine(a.value() - b.value(), 1.0, a, -1.0, b); }

LDScalar operator*(const LDScalar& a, const LDScalar& b) {
  return combine(a.value() * b.value(), b.value(), a, a.value(), b);
}

LDScalar operator/(const LDScalar& a, const LDScalar& b) {
  const double q = checked_div(a.value(), b.value());
  return combine(q, 1.0 / b.value(), a, -q / b.value(), b);
}

LDScalar operator+(const LDScalar& a, double b) { return scaled(a.value() + b, 1.0, a); }
LDScalar operator+(double a, const LDScalar& b) { return b + a; }
LDScalar operator-(const LDScalar& a, double b) { return scaled(a.value() - b, 1.0, a); }
LDScalar operator-(double a, const LDScalar& b) { return scaled(a - b.value(), -1.0, b); }
LDScalar operator*(const LDScalar& a, double b) { return scaled(a.value() * b, b, a); }
LDScalar operator*(double a, const LDScalar& b) { return b * a; }
LDScalar operator/(const LDScalar& a, double b) {
  const double q = checked_div(a.value(), b);
  return scaled(q, 1.0 / b, a);
}

LDScalar ld_min(const LDScalar& a, const LDScalar& b) {
  require_same_k(a, b);
  // fsign(a.value - b.value, a.dirs - b.dirs), evaluated lazily.
  const auto sign_of = [](double d) { return d > 0.0 ? 1 : (d < 0.0 ? -1 : 0); };
  int s = sign_of(a.value() - b.value());
  for (std::size_t i = 0; s == 0 && i < a.k(); ++i) s = sign_of(a.dir(i) - b.dir(i));
  return s <= 0 ? a : b;
}

LDScalar ld_max(const LDScalar& a, const LDScalar& b) { return -ld_min(-a, -b); }

LDScalar ld_abs(const LDScalar& a) { return ld_max(a, -a); }

LDScalar ld_exp(const LDScalar& a) {
  const double e = std::exp(a.value());
  return scaled(e, e, a);
}

LDScalar ld_log(const LDScalar& a) { return scaled(checked_log(a.value()), 1.0 / a.value(), a); }

LDScalar ld_sqrt(const LDScalar& a) {
  const double r = checked_sqrt(a.value());
  if (r == 0.0) {
    if (!all_zero(a.dirs())) throw DomainError("sqrt is not differentiable at 0 along a nonzero direction");
    return LDScalar(0.0, a.k());
  }
  return scaled(r, 0.5 / r, a);
}

LDScalar ld_sin(const LDScalar& a) { return scaled(std::sin(a.value()), std::cos(a.value()), a); }

LDScalar ld_cos(const LDScalar& a) { return scaled(std::cos(a.value()), -std::sin(a.value()), a); }

LDScalar ld_pow(const LDScalar& base, double exponent) {
  const double v = checked_pow(base.value(), exponent);
  if (exponent == 0.0) return LDScalar(v, base.k());
  if (base.value() == 0.0 && exponent < 1.0 && !all_zero(base.dirs())) {
    throw DomainError("pow: derivative unbounded at base 0 with exponent < 1");
  }
  return scaled(v, exponent * checked_pow(base.value(), exponent - 1.0), base);
}

LDScalar ld_pow(const LDScalar& base, const LDScalar& exponent) {
  require_same_k(base, exponent);
  if (all_zero(exponent.dirs())) return ld_pow(base, exponent.value());
  if (!(base.value() > 0.0)) throw DomainError("pow: variable exponent requires a positive base");
  const double v = std::pow(base.value(), exponent.value());
  return combine(v, exponent.value() * v / base.value(), base, v * std::log(base.value()), exponent);
}

double checked_div(double a, double b) {
  if (b == 0.0) throw DomainError("division by zero");
  return a / b;
}

double checked_log(double a) {
  if (!(a > 0.0)) throw DomainError("log of non-positive value " + std::to_string(a));
  return std::log(a);
}

double checked_sqrt(double a) {
  if (a < 0.0) throw DomainError("sqrt of negative value " + std::to_string(a));
  return std::sqrt(a);
}

double checked_pow(double base, double exponent) {
  if (base < 0.0 && exponent != std::floor(exponent)) {
    throw DomainError("pow: negative base with non-integer exponent");
  }
  if (base == 0.0 && exponent < 0.0) throw DomainError("pow: zero base with negative exponent");
  return std::pow(base, exponent);
}

// ---------------------------------------------------------------------------

DirectionsMatrix DirectionsMatrix::identity(int n) {
  if (n < 1) throw std::invalid_argument("directions matrix needs n >= 1");
  return {Eigen::MatrixXd::Identity(n, n), RightInverseKind::square_inverse, Eigen::MatrixXd::Identity(n, n)};
}

DirectionsMatrix DirectionsMatrix::probing(const Eigen::VectorXd& d) {
  const Eigen::Index n = d.size();
  if (n < 1) throw std::invalid_argument("probing direction must be nonempty");
  Eigen::MatrixXd m(n, n + 1);
  m.col(0) = d;
  m.rightCols(n).setIdentity();
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n + 1, n);
  r.bottomRows(n).setIdentity();
  return {std::move(m), RightInverseKind::drop_first_column, std::move(r)};
}

DirectionsMatrix DirectionsMatrix::square(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() < 1) throw std::invalid_argument("square directions matrix required");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (lu.rank() < m.rows()) throw std::invalid_argument("directions matrix must have full row rank");
  return {m, RightInverseKind::square_inverse, lu.inverse()};
}

Eigen::VectorXd DirectionsMatrix::probe() const {
  if (kind_ != RightInverseKind::drop_first_column) return {};
  return entries_.col(0);
}

}  // namespace daeobs
