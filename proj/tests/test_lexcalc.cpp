#include <array>
#include <cmath>
#include <stdexcept>

#include "daeobs/errors.hpp"
#include "daeobs/ld_scalar.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace daeobs;
using testsupport::Gen;

namespace {

std::vector<double> v(std::initializer_list<double> l) { return l; }

// Smooth composite written once for both scalar kinds.
template <class S>
S smooth_fn(const S& x, const S& y) {
  using std::cos, std::exp, std::log, std::sin, std::sqrt, std::pow;
  if constexpr (std::is_same_v<S, double>) {
    return exp(sin(x) * y) / (1.0 + x * x) + sqrt(y * y + 1.0) * log(2.0 + cos(x)) + pow(x * x + 1.0, 1.5);
  } else {
    return ld_exp(ld_sin(x) * y) / (1.0 + x * x) + ld_sqrt(y * y + 1.0) * ld_log(2.0 + ld_cos(x)) +
           ld_pow(x * x + 1.0, 1.5);
  }
}

template <class S>
S kinked_fn(const S& x, const S& y) {
  if constexpr (std::is_same_v<S, double>) {
    return std::min(x, y) + std::abs(x - y * y) - std::max(2.0 * x, -y);
  } else {
    return ld_min(x, y) + ld_abs(x - y * y) - ld_max(2.0 * x, -y);
  }
}

}  // namespace

TEST_CASE("fsign returns the sign of the first nonzero element") {
  CHECK(fsign(v({0, 0, 0})) == 0);
  CHECK(fsign(v({0, -2, 5})) == -1);
  CHECK(fsign(v({3, -7})) == 1);
  CHECK(fsign(std::vector<double>{}) == 0);
  CHECK(fsign(v({-0.0, 1e-300})) == 1);
}

TEST_CASE("ld_min selects the lexicographically smaller row") {
  CHECK(ld_min({1, v({10, 20})}, {2, v({30, 40})}) == LDScalar(1, v({10, 20})));
  CHECK(ld_min({0, v({1, 0})}, {0, v({0, 1})}) == LDScalar(0, v({0, 1})));
  CHECK(ld_min({0, v({0, 5})}, {0, v({0, 7})}) == LDScalar(0, v({0, 5})));
  // Full tie keeps the first argument.
  CHECK(ld_min({0, v({0, 0})}, {0, v({0, 0})}) == LDScalar(0, v({0, 0})));
}

TEST_CASE("ld_max and ld_abs") {
  CHECK(ld_max({2, v({1})}, {1, v({9})}) == LDScalar(2, v({1})));
  CHECK(ld_max({0, v({1, -1})}, {0, v({-1, 1})}) == LDScalar(0, v({1, -1})));
  const LDScalar a{0.5, v({3, -4})};
  CHECK(ld_max(a, a) == a);

  CHECK(ld_abs({-3, v({1, 0})}) == LDScalar(3, v({-1, 0})));
  CHECK(ld_abs({0, v({1, -1})}) == LDScalar(0, v({1, -1})));
  CHECK(ld_abs({0, v({0, 0})}) == LDScalar(0, v({0, 0})));
  CHECK(ld_abs({0, v({-2, 5})}) == LDScalar(0, v({2, -5})));
}

TEST_CASE("smooth arithmetic follows the chain rule") {
  CHECK(LDScalar(2, v({1, 0})) * LDScalar(3, v({0, 1})) == LDScalar(6, v({3, 2})));
  CHECK(ld_exp(LDScalar(0, v({1}))) == LDScalar(1, v({1})));
  CHECK(ld_pow(LDScalar(2, v({1})), 2.0) == LDScalar(4, v({4})));
  const LDScalar q = LDScalar(1, v({1})) / LDScalar(2, v({1}));
  CHECK(q.value() == doctest::Approx(0.5));
  CHECK(q.dir(0) == doctest::Approx(0.25));
  const LDScalar p = ld_pow(LDScalar(2, v({1})), LDScalar(3, v({0})));
  CHECK(p.value() == doctest::Approx(8.0));
  CHECK(p.dir(0) == doctest::Approx(12.0));
}

TEST_CASE("direction count mismatch is rejected") {
  CHECK_THROWS_AS(LDScalar(1, v({1})) + LDScalar(1, v({1, 2})), std::invalid_argument);
  CHECK_THROWS_AS(ld_min(LDScalar(1, v({1})), LDScalar(1, v({1, 2}))), std::invalid_argument);
}

TEST_CASE("domain violations raise DomainError") {
  CHECK_THROWS_AS(LDScalar(1, v({1})) / LDScalar(0, v({1})), DomainError);
  CHECK_THROWS_AS(ld_log(LDScalar(0, v({1}))), DomainError);
  CHECK_THROWS_AS(ld_log(LDScalar(-1, v({0}))), DomainError);
  CHECK_THROWS_AS(ld_sqrt(LDScalar(-1, v({0}))), DomainError);
  CHECK_THROWS_AS(ld_sqrt(LDScalar(0, v({1}))), DomainError);
  CHECK(ld_sqrt(LDScalar(0, v({0}))) == LDScalar(0, v({0})));
  CHECK_THROWS_AS(ld_pow(LDScalar(-1, v({0})), LDScalar(0.5, v({1}))), DomainError);
  CHECK_THROWS_AS(checked_div(1.0, 0.0), DomainError);
}

TEST_CASE("property: negation duality is bitwise") {
  Gen g(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = std::size_t(g.integer(0, 4));
    const bool ties = trial % 2 == 0;
    const LDScalar a = g.ld(k, ties);
    const LDScalar b = g.ld(k, ties);
    REQUIRE(ld_min(a, b) == -ld_max(-a, -b));
    REQUIRE(ld_max(a, b) == -ld_min(-a, -b));
  }
}

TEST_CASE("property: nonsmooth values equal plain min/max/abs") {
  Gen g(12);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = std::size_t(g.integer(0, 3));
    const LDScalar a = g.ld(k, trial % 3 == 0);
    const LDScalar b = g.ld(k, trial % 3 == 0);
    REQUIRE(ld_min(a, b).value() == std::min(a.value(), b.value()));
    REQUIRE(ld_max(a, b).value() == std::max(a.value(), b.value()));
    REQUIRE(ld_abs(a).value() == std::abs(a.value()));
    // The selected row is one of the operands'.
    const LDScalar m = ld_min(a, b);
    REQUIRE((m == a || m == b));
  }
}

TEST_CASE("property: smooth LD-derivatives match central differences") {
  Gen g(13);
  for (int trial = 0; trial < 300; ++trial) {
    const double x = g.uniform(-2, 2);
    const double y = g.uniform(-2, 2);
    const LDScalar r = smooth_fn(LDScalar(x, v({1, 0})), LDScalar(y, v({0, 1})));
    REQUIRE(r.value() == smooth_fn(x, y));
    const double h = 1e-6;
    const double gx = (smooth_fn(x + h, y) - smooth_fn(x - h, y)) / (2 * h);
    const double gy = (smooth_fn(x, y + h) - smooth_fn(x, y - h)) / (2 * h);
    REQUIRE(testsupport::rel_err(r.dir(0), gx) < 1e-6);
    REQUIRE(testsupport::rel_err(r.dir(1), gy) < 1e-6);
  }
}

TEST_CASE("property: first column is the one-sided directional derivative") {
  Gen g(14);
  const double alpha = 1e-7;
  for (int trial = 0; trial < 500; ++trial) {
    // Points on the kinks x = y, x = y^2, 2x = -y are hit deliberately.
    double x = g.uniform(-1.5, 1.5);
    double y = g.uniform(-1.5, 1.5);
    switch (trial % 4) {
      case 0: y = x; break;
      case 1: x = y * y; break;
      case 2: x = -y / 2.0; break;
      default: break;
    }
    const double d1 = g.uniform(-1, 1);
    const double d2 = g.uniform(-1, 1);
    const LDScalar r = kinked_fn(LDScalar(x, v({d1, 1, 0})), LDScalar(y, v({d2, 0, 1})));
    const double fd = (kinked_fn(x + alpha * d1, y + alpha * d2) - kinked_fn(x, y)) / alpha;
    REQUIRE(r.value() == kinked_fn(x, y));
    REQUIRE(std::abs(r.dir(0) - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("directions matrices") {
  const auto I = DirectionsMatrix::identity(3);
  CHECK(I.right_inverse_kind() == RightInverseKind::square_inverse);
  CHECK(I.right_inverse().isIdentity());

  Eigen::VectorXd d(3);
  d << 1, -2, 0.5;
  const auto P = DirectionsMatrix::probing(d);
  CHECK(P.cols() == 4);
  CHECK(P.right_inverse_kind() == RightInverseKind::drop_first_column);
  CHECK((P.entries() * P.right_inverse()).isIdentity(0.0));
  CHECK(P.probe() == d);

  Gen g(15);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd m = g.matrix(3, 3, -1, 1) + 3.0 * Eigen::MatrixXd::Identity(3, 3);
    const auto S = DirectionsMatrix::square(m);
    REQUIRE((S.entries() * S.right_inverse()).isIdentity(1e-12));
  }
  Eigen::MatrixXd singular(2, 2);
  singular << 1, 2, 2, 4;
  CHECK_THROWS_AS(DirectionsMatrix::square(singular), std::invalid_argument);
}
