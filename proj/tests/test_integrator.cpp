#include <cmath>
#include <sstream>

#include "daeobs/errors.hpp"
#include "daeobs/integrator.hpp"
#include "daeobs/model.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace daeobs;
using testsupport::Gen;

namespace {

DaeModel decay() {
  ModelSpec s;
  s.diff_states = {"x"};
  s.alg_states = {"w"};
  s.f = {"-x"};
  s.g = {"w - x"};
  s.h = {"w"};
  s.x0 = {1};
  return DaeModel(s);
}

DaeModel one_state(const std::string& g, const std::string& h = "w") {
  ModelSpec s;
  s.diff_states = {"x1", "x2"};
  s.alg_states = {"w"};
  s.f = {"0", "0"};
  s.g = {g};
  s.h = {h};
  s.x0 = {0, 0};
  return DaeModel(s);
}

Eigen::VectorXd vec(std::initializer_list<double> l) {
  Eigen::VectorXd v(Eigen::Index(l.size()));
  Eigen::Index i = 0;
  for (double e : l) v(i++) = e;
  return v;
}

// Full derivatives of the substituted wind-turbine constraint, derived by hand.
struct WindPartials {
  double dV, dEq;
};
WindPartials wind_partials(double Eq, double V) {
  const double R = 0.02, X = 0.02987, E = 1.0164, Xeq = 0.8, P = 1.0;
  const double Q = V * (Eq - V) / Xeq;
  const double dQdV = (Eq - 2 * V) / Xeq;
  const double dQdEq = V / Xeq;
  const double dV = 4 * V * V * V - 2 * V * (2 * (P * R + Q * X) + E * E) - 2 * X * V * V * dQdV +
                    (R * R + X * X) * 2 * Q * dQdV;
  const double dEq = -2 * X * V * V * dQdEq + (R * R + X * X) * 2 * Q * dQdEq;
  return {dV, dEq};
}

double output_at(const DaeModel& m, const Eigen::VectorXd& x0, double t) {
  const Eigen::VectorXd w0 = consistent_init(m, 0, x0, *m.w0_guess());
  const Trajectory tr = integrate_dae(m, 0, t, x0, w0);
  return eval_values(m, Block::h, t, tr.x.back(), tr.w.back())(0);
}

}  // namespace

TEST_CASE("time grid lands on tf") {
  const auto g = time_grid(0, 1, 0.3);
  REQUIRE(g.size() == 5);
  CHECK(g.back() == 1.0);
  CHECK(g[3] == doctest::Approx(0.9));
  CHECK(time_grid(0, 1, 1e-3).size() == 1001);
  CHECK(time_grid(2, 2, 1e-3).size() == 1);
}

TEST_CASE("exponential decay DAE") {
  const DaeModel m = decay();
  const Trajectory tr = integrate_dae(m, 0, 1, vec({1}), vec({1}));
  CHECK(tr.size() == 1001);
  CHECK(std::abs(tr.x.back()(0) - std::exp(-1.0)) <= 1e-7);
  CHECK(std::abs(tr.w.back()(0) - tr.x.back()(0)) <= 1e-10);

  const Trajectory single = integrate_dae(m, 0.5, 0.5, vec({2}), vec({2}));
  REQUIRE(single.size() == 1);
  CHECK(single.x[0](0) == 2);
  CHECK(single.times[0] == 0.5);
}

TEST_CASE("fourth-order convergence") {
  const DaeModel m = decay();
  IntegratorOptions coarse, fine;
  coarse.step = 0.1;
  fine.step = 0.05;
  const double e1 = std::abs(integrate_dae(m, 0, 1, vec({1}), vec({1}), coarse).x.back()(0) - std::exp(-1.0));
  const double e2 = std::abs(integrate_dae(m, 0, 1, vec({1}), vec({1}), fine).x.back()(0) - std::exp(-1.0));
  const double ratio = e1 / e2;
  CHECK(ratio >= 12);
  CHECK(ratio <= 20);
}

TEST_CASE("inconsistent initial conditions are rejected") {
  CHECK_THROWS_AS(integrate_dae(decay(), 0, 1, vec({1}), vec({0.5})), ConvergenceError);
}

TEST_CASE("wind turbine trajectory") {
  const DaeModel m = builtin_wind_turbine(WindOutput::smooth);
  const Eigen::VectorXd w0 = consistent_init(m, 0, m.x0(), *m.w0_guess());
  const Trajectory tr = integrate_dae(m, 0, 1, m.x0(), w0);
  REQUIRE(tr.size() == 1001);
  for (double r : tr.g_residuals) REQUIRE(r <= 1e-10);
  double crossing = -1;
  for (std::size_t i = 1; i < tr.size(); ++i) {
    if (tr.w[i - 1](0) >= 0.98 && tr.w[i](0) < 0.98) {
      crossing = tr.times[i];
      break;
    }
  }
  CHECK(std::abs(crossing - 0.057) <= 0.005);

  std::ostringstream csv;
  write_trajectory_csv(csv, m, tr);
  CHECK(csv.str().rfind("t,x_V_ref,x_E_q,w_V,g_resid\n0,0.5,0.75,", 0) == 0);
}

TEST_CASE("integration is deterministic") {
  const DaeModel m = builtin_wind_turbine(WindOutput::min_threshold);
  const Eigen::VectorXd w0 = consistent_init(m, 0, m.x0(), *m.w0_guess());
  const auto a = integrate_sensitivity(m, 0, 0.2, m.x0(), w0, DirectionsMatrix::probing(vec({1, -1})));
  const auto b = integrate_sensitivity(m, 0, 0.2, m.x0(), w0, DirectionsMatrix::probing(vec({1, -1})));
  for (std::size_t i = 0; i < a.base.size(); ++i) {
    REQUIRE(a.base.x[i] == b.base.x[i]);
    REQUIRE(a.X[i] == b.X[i]);
    REQUIRE(a.Y[i] == b.Y[i]);
  }
}

TEST_CASE("sensitivities of the decay DAE") {
  const auto s = integrate_sensitivity(decay(), 0, 1, vec({1}), vec({1}), DirectionsMatrix::identity(1));
  CHECK(s.X.front()(0, 0) == 1.0);
  CHECK(std::abs(s.X.back()(0, 0) - std::exp(-1.0)) <= 1e-7);
  CHECK(std::abs(s.W.back()(0, 0) - std::exp(-1.0)) <= 1e-7);
  CHECK(std::abs(s.Y.back()(0, 0) - std::exp(-1.0)) <= 1e-7);
}

TEST_CASE("smooth algebraic sensitivities follow the implicit function theorem") {
  const DaeModel m = builtin_wind_turbine(WindOutput::smooth);
  const Eigen::VectorXd w0 = consistent_init(m, 0, m.x0(), *m.w0_guess());
  const auto s = integrate_sensitivity(m, 0, 1, m.x0(), w0, DirectionsMatrix::identity(2));
  const double d = 1e-6;
  for (std::size_t i = 0; i < s.base.size(); i += 50) {
    const double t = s.base.times[i];
    const Eigen::VectorXd& x = s.base.x[i];
    const Eigen::VectorXd& w = s.base.w[i];
    Eigen::MatrixXd gx(1, 2);
    for (int j = 0; j < 2; ++j) {
      const Eigen::VectorXd e = Eigen::VectorXd::Unit(2, j) * d;
      gx(0, j) = (eval_values(m, Block::g, t, x + e, w)(0) - eval_values(m, Block::g, t, x - e, w)(0)) / (2 * d);
    }
    const double gw = (eval_values(m, Block::g, t, x, w + vec({d}))(0) - eval_values(m, Block::g, t, x, w - vec({d}))(0)) /
                      (2 * d);
    const Eigen::MatrixXd expect = -(gx * s.X[i]) / gw;
    REQUIRE((expect - s.W[i]).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("wind turbine algebraic column against the analytic partials") {
  const DaeModel m = builtin_wind_turbine(WindOutput::smooth);
  Gen g(41);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x(2);
    x << g.uniform(0.3, 0.7), g.uniform(0.6, 0.9);
    const Eigen::VectorXd w = consistent_init(m, 0, x, *m.w0_guess());
    const Eigen::VectorXd Xcol = g.vector(2, -1, 1);
    const Eigen::VectorXd W = solve_sensitivity_algebraic(m, 0, x, w, Xcol, Eigen::MatrixXd(1, 0));
    const WindPartials p = wind_partials(x(1), w(0));
    REQUIRE(W(0) == doctest::Approx(-p.dEq * Xcol(1) / p.dV).epsilon(1e-10));
  }
}

TEST_CASE("algebraic columns of simple constraints") {
  const Eigen::VectorXd x = vec({0, 0});
  {
    const DaeModel m = one_state("w - x1");
    const Eigen::VectorXd W = solve_sensitivity_algebraic(m, 0, vec({2, 0}), vec({2}), vec({0.7, 3}),
                                                          Eigen::MatrixXd(1, 0));
    CHECK(W(0) == doctest::Approx(0.7));
  }
  {
    // min(w, 2w) selects w for w > 0.
    const DaeModel m = one_state("min(w, 2 * w) - x1");
    const Eigen::VectorXd W = solve_sensitivity_algebraic(m, 0, vec({2, 0}), vec({2}), vec({-1.5, 0}),
                                                          Eigen::MatrixXd(1, 0));
    CHECK(W(0) == doctest::Approx(-1.5));
  }
  {
    // w = |x1| at x1 = 0: each column inherits the branch fixed by the first nonzero one.
    const DaeModel m = one_state("w - abs(x1)");
    Eigen::MatrixXd X(2, 3);
    X << 0, -1, 3, 0, 0, 0;
    const Eigen::MatrixXd W = solve_algebraic_sensitivities(m, 0, x, vec({0}), X);
    CHECK(W(0, 0) == 0);
    CHECK(W(0, 1) == doctest::Approx(1));
    CHECK(W(0, 2) == doctest::Approx(-3));
  }
  {
    // max(w, 0) + w = x1 at the kink: slope 2 for w > 0, 1 for w < 0.
    const DaeModel m = one_state("max(w, 0) + w - x1");
    Eigen::MatrixXd X(2, 3);
    X << -1, 2, 0, 0, 0, 0;
    Eigen::MatrixXd W = solve_algebraic_sensitivities(m, 0, x, vec({0}), X);
    CHECK(W(0, 0) == doctest::Approx(-1));
    CHECK(W(0, 1) == doctest::Approx(2));
    CHECK(W(0, 2) == doctest::Approx(0));
    X << 0, -1, 4, 0, 0, 0;
    W = solve_algebraic_sensitivities(m, 0, x, vec({0}), X);
    CHECK(W(0, 0) == doctest::Approx(0));
    CHECK(W(0, 1) == doctest::Approx(-1));
    CHECK(W(0, 2) == doctest::Approx(4));
  }
}

TEST_CASE("output sensitivities match finite differences") {
  const DaeModel m = builtin_wind_turbine(WindOutput::smooth);
  const Eigen::VectorXd w0 = consistent_init(m, 0, m.x0(), *m.w0_guess());
  const auto s = integrate_sensitivity(m, 0, 1, m.x0(), w0, DirectionsMatrix::identity(2));
  const double delta = 1e-6;
  for (double t : {0.1, 0.5, 1.0}) {
    const std::size_t i = s.base.nearest(t);
    for (int j = 0; j < 2; ++j) {
      const Eigen::VectorXd e = Eigen::VectorXd::Unit(2, j) * delta;
      const double fd = (output_at(m, m.x0() + e, t) - output_at(m, m.x0() - e, t)) / (2 * delta);
      INFO("t = " << t << ", column " << j);
      CHECK(std::abs(s.Y[i](0, j) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("zero probing direction is absorbed") {
  const DaeModel m = builtin_wind_turbine(WindOutput::min_threshold);
  const Eigen::VectorXd w0 = consistent_init(m, 0, m.x0(), *m.w0_guess());
  const auto s = integrate_sensitivity(m, 0, 0.3, m.x0(), w0, DirectionsMatrix::probing(vec({0, 0})));
  for (std::size_t i = 0; i < s.base.size(); ++i) {
    REQUIRE(s.X[i].col(0).isZero(0.0));
    REQUIRE(s.W[i].col(0).isZero(0.0));
    REQUIRE(s.Y[i].col(0).isZero(0.0));
  }
}

TEST_CASE("property: sensitivity trajectories start at M and stay consistent") {
  Gen g(42);
  const DaeModel m = builtin_wind_turbine(WindOutput::min_threshold);
  const Eigen::VectorXd w0 = consistent_init(m, 0, m.x0(), *m.w0_guess());
  for (int trial = 0; trial < 6; ++trial) {
    const DirectionsMatrix M = DirectionsMatrix::probing(g.vector(2, -1, 1));
    const auto s = integrate_sensitivity(m, 0, 0.15, m.x0(), w0, M);
    REQUIRE(s.X.front() == M.entries());
    for (double r : s.base.g_residuals) REQUIRE(r <= 1e-10);
    for (std::size_t i = 0; i < s.base.size(); ++i) {
      const LDEval ge = eval_ld(m, Block::g, s.base.times[i], s.base.x[i], s.base.w[i], s.X[i], s.W[i]);
      REQUIRE(ge.dirs.cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}
