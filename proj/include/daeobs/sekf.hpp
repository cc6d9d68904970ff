#pragma once

// Sensitivity-based extended Kalman filter for semi-explicit DAEs.
//
// The covariance lives on the differential states only. Over a measurement
// interval the sensitivity system supplies both the transition
// Phi = X(t_k) R_M and the output matrix C = Y(t_k) R_M, and
//
//   P-  = Phi P Phi^T + Q dt
//   L   = P- C^T (R + C P- C^T)^-1       (rows of non-observable states zeroed)
//   x+  = x- + L (y_m - h(x-, w-))
//   P+  = (I - L C) P-                   (symmetrized)
//
// after which w is re-solved from g = 0.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "daeobs/errors.hpp"
#include "daeobs/integrator.hpp"
#include "daeobs/model.hpp"
#include "daeobs/observability.hpp"
#include "json.hpp"

namespace daeobs {

struct NoiseSpec {
  Eigen::MatrixXd Q;  // n_x x n_x, per unit time
  Eigen::MatrixXd R;  // n_y x n_y
  std::uint64_t seed = 0;

  static NoiseSpec isotropic(int n_x, double q, int n_y, double r, std::uint64_t seed);
};

/// Square root factor F with F F^T = S for symmetric positive semidefinite
/// S. Throws std::invalid_argument otherwise.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& S, const std::string& what);

struct MeasurementSeries {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> values;

  std::size_t size() const { return times.size(); }
};

/// `steps` equally spaced measurement times t0 + (tf - t0) k / steps, k = 1..steps.
std::vector<double> measurement_times(double t0, double tf, int steps);

struct TruthRun {
  Trajectory truth;
  MeasurementSeries measurements;
};

/// Euler-Maruyama on x' = f + noise with w re-solved from g = 0 after every
/// step; the grid is refined so that every measurement time is hit exactly.
/// Measurements are y = h(x, w) + F_R xi. Normal variates come from
/// std::mt19937_64 seeded with noise.seed.
TruthRun synthesize_truth(const DaeModel& model, const NoiseSpec& noise, double t0, double tf, double dt_sim,
                          std::span<const double> meas_times, const Eigen::VectorXd& x0, const Eigen::VectorXd& w0,
                          const NewtonOptions& newton = {});

struct Prediction {
  Eigen::VectorXd x;
  Eigen::VectorXd w;
};

Prediction predict(const DaeModel& model, const Eigen::VectorXd& x_prev, const Eigen::VectorXd& w_prev, double t_prev,
                   double t_k, const IntegratorOptions& options = {});

struct UpdateResult {
  Eigen::VectorXd x;
  Eigen::VectorXd w;
  Eigen::MatrixXd Phi;
  Eigen::MatrixXd C;
  Eigen::MatrixXd P_prior;
  Eigen::MatrixXd L;
  Eigen::MatrixXd P;
  Eigen::VectorXd y_pred;
  Eigen::VectorXd innovation;
};

/// Raised when w cannot be restored after the state update.
class PosteriorConsistencyError : public NumericError {
 public:
  PosteriorConsistencyError(const std::string& message, Eigen::VectorXd posterior_x)
      : NumericError(message), x_(std::move(posterior_x)) {}
  const Eigen::VectorXd& posterior_x() const { return x_; }

 private:
  Eigen::VectorXd x_;
};

/// `sens` must span [t_{k-1}, t_k] and start from X(t_{k-1}) = M; its final
/// sample is the prior (x-, w-).
UpdateResult measurement_update(const DaeModel& model, const SensitivityTrajectory& sens, const Eigen::MatrixXd& P,
                                const NoiseSpec& noise, const Eigen::VectorXd& y_m, std::span<const int> nonobs_diff,
                                const NewtonOptions& newton = {});

struct FilterStep {
  double t = 0.0;
  Eigen::VectorXd x_prior;
  Eigen::VectorXd w_prior;
  Eigen::VectorXd x;
  Eigen::VectorXd w;
  Eigen::MatrixXd C;
  Eigen::MatrixXd L;
  Eigen::MatrixXd P;
  Eigen::VectorXd innovation;
  std::vector<int> nonobs_diff;
  std::vector<int> nonobs_alg;
  double g_residual = 0.0;
};

struct SekfOptions {
  IntegratorOptions integrator;
  double eps_rank = 1e-6;
  double eps_piv = 1e-8;
  Execution execution = Execution::parallel;
  /// Probing direction of M = [d  I]; empty means square M = I.
  std::optional<Eigen::VectorXd> probe;
};

struct FilterRun {
  double t0 = 0.0;
  Eigen::VectorXd x0;
  Eigen::VectorXd w0;
  Eigen::MatrixXd P0;
  NoiseSpec noise;
  RightInverseKind m_kind = RightInverseKind::square_inverse;
  int samples_per_interval = 2;
  std::vector<FilterStep> steps;
};

/// Any failure aborts the run; the steps completed so far are attached.
class SekfError : public NumericError {
 public:
  SekfError(const std::string& message, FilterRun partial)
      : NumericError(message), partial_(std::move(partial)) {}
  const FilterRun& partial() const { return partial_; }

 private:
  FilterRun partial_;
};

/// max(2, ceil(n_x / n_y)).
int samples_per_interval(int n_x, int n_y);

FilterRun run_sekf(const DaeModel& model, const NoiseSpec& noise, double t0, const Eigen::VectorXd& x0,
                   const Eigen::VectorXd& w0, const Eigen::MatrixXd& P0, const MeasurementSeries& meas,
                   const SekfOptions& options = {});

/// Header `t,y_<name>...`.
void write_measurements_csv(std::ostream& out, const DaeModel& model, const MeasurementSeries& meas);
MeasurementSeries read_measurements_csv(std::istream& in, const DaeModel& model);

/// Header `t,xbar_<name>...,wbar_<name>...,innov_<name>...,P_<i>_<j>...,nonobs_flags`;
/// nonobs_flags is one character per state (x then w), '1' = non-observable.
void write_filter_csv(std::ostream& out, const DaeModel& model, const FilterRun& run);

nlohmann::json filter_metadata(const FilterRun& run, const SekfOptions& options);

}  // namespace daeobs
