#pragma once

// Fixed-step half-explicit RK4 for semi-explicit index-1 DAEs, optionally
// carrying the forward LD-sensitivity system
//
//   X' = f'(x, w, u; (X, W, 0)),   X(t0) = M
//   0  = g'(x, w, v; (X, W, 0))
//   Y  = h'(x, w, u, v; (X, W, 0, 0))
//
// along the reference solution.

#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "daeobs/ld_scalar.hpp"
#include "daeobs/model.hpp"

namespace daeobs {

struct IntegratorOptions {
  double step = 1e-3;
  NewtonOptions newton;
  /// Nonsmooth algebraic sensitivity solves fall back to enumerating all
  /// 2^m branch fixings when g has m <= branch_cap min/max/abs calls.
  int branch_cap = 8;
  int column_max_iter = 50;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> w;
  std::vector<double> g_residuals;

  std::size_t size() const { return times.size(); }
  /// Index of the sample nearest to t.
  std::size_t nearest(double t) const;
};

struct SensitivityTrajectory {
  Trajectory base;
  DirectionsMatrix directions;
  std::vector<Eigen::MatrixXd> X;  // n_x x k
  std::vector<Eigen::MatrixXd> W;  // n_w x k
  std::vector<Eigen::MatrixXd> Y;  // n_y x k
};

/// t0, t0 + h, ..., with the final step shortened to land on tf.
std::vector<double> time_grid(double t0, double tf, double h);

Trajectory integrate_dae(const DaeModel& model, double t0, double tf, const Eigen::VectorXd& x0,
                         const Eigen::VectorXd& w0, const IntegratorOptions& options = {});

SensitivityTrajectory integrate_sensitivity(const DaeModel& model, double t0, double tf, const Eigen::VectorXd& x0,
                                            const Eigen::VectorXd& w0, const DirectionsMatrix& M,
                                            const IntegratorOptions& options = {});

/// Column j of W from g'(x, w, v; (X, W, 0)) = 0, where X holds columns
/// 0..j of the x-directions and W_prefix the already solved columns 0..j-1.
Eigen::VectorXd solve_sensitivity_algebraic(const DaeModel& model, double t, const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& w, const Eigen::MatrixXd& X,
                                            const Eigen::MatrixXd& W_prefix, const IntegratorOptions& options = {});

/// All columns of W. Smooth g: one factorization of dg/dw shared by every
/// column. Nonsmooth g: columns solved in lexicographic order.
Eigen::MatrixXd solve_algebraic_sensitivities(const DaeModel& model, double t, const Eigen::VectorXd& x,
                                              const Eigen::VectorXd& w, const Eigen::MatrixXd& X,
                                              const IntegratorOptions& options = {});

/// Header `t,x_<name>...,w_<name>...,g_resid`, 17 significant digits.
void write_trajectory_csv(std::ostream& out, const DaeModel& model, const Trajectory& trajectory);

}  // namespace daeobs
