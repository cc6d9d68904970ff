#pragma once

// Sensitivity rank condition (SERC) observability for DAEs. For a probing
// direction d the sensitivity system is integrated with M = [d  I]; the
// output L-sensitivities S_y^L(t_i) = Y(t_i) [0; I] are stacked over sample
// times into the L-SERC matrix, whose rank decides observability and whose
// null space identifies the non-observable states.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "daeobs/integrator.hpp"
#include "daeobs/model.hpp"
#include "json.hpp"

namespace daeobs {

enum class Execution { serial, parallel };

/// A probing direction d (M = [d  I]) or, when empty, the square identity
/// directions matrix of the classical smooth SERC test.
struct Probe {
  std::optional<Eigen::VectorXd> direction;

  static Probe identity() { return {}; }
  static Probe along(Eigen::VectorXd d) { return {std::move(d)}; }

  DirectionsMatrix matrix(int n_x) const;
};

/// {+e_1, -e_1, ..., +e_n, -e_n}.
std::vector<Probe> axis_probes(int n_x);

/// `count` equally spaced times on [t0, tf] (count >= 1).
std::vector<double> uniform_samples(double t0, double tf, int count);

struct LSercMatrix {
  Probe probe;
  std::vector<double> sample_times;
  Eigen::MatrixXd entries;  // (N+1) n_y x n_x, row block i = S_y^L(t_i)
  Eigen::VectorXd singular_values;
};

/// Stacks S_y^L at the trajectory samples nearest to `sample_times`.
/// Throws std::out_of_range for times outside the trajectory window.
LSercMatrix build_lserc(const SensitivityTrajectory& sens, std::span<const double> sample_times);

/// Stacks S_w^L(t_i) = W(t_i) R_M ((N+1) n_w x n_x).
Eigen::MatrixXd stack_alg_sensitivities(const SensitivityTrajectory& sens, std::span<const double> sample_times);

struct RankDecision {
  int rank = 0;
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd V;  // right singular vectors, n_x x n_x
};

/// rank = #{sigma_i > eps_rank * max(sigma_1, 1)}.
RankDecision serc_rank(const Eigen::MatrixXd& upsilon, double eps_rank);

/// Reduced row echelon form by Gauss-Jordan elimination with partial
/// pivoting; entries with magnitude <= eps_piv do not qualify as pivots.
Eigen::MatrixXd rref(Eigen::MatrixXd m, double eps_piv, std::vector<int>* pivot_columns = nullptr);

/// Pivot columns of rref(V_r^T), V_r the trailing n_x - rank columns of V.
std::vector<int> nonobs_diff_states(const Eigen::MatrixXd& V, int rank, double eps_piv);

/// w_i is non-observable when Psi_{w_i} (row i of every S_w^L block,
/// restricted to columns J) is nonzero, i.e. max |entry| exceeds
/// eps_rank * max(1, max |S_w^L|).
std::vector<int> nonobs_alg_states(const Eigen::MatrixXd& stacked_alg_sens, int n_w, std::span<const int> J,
                                   double eps_rank);
std::vector<int> nonobs_alg_states(const SensitivityTrajectory& sens, std::span<const double> sample_times,
                                   std::span<const int> J, double eps_rank);

enum class Verdict { observable, non_observable };

struct DirectionReport {
  LSercMatrix upsilon;
  int rank = 0;
  Verdict verdict = Verdict::non_observable;
  std::vector<int> nonobs_diff;
  Eigen::MatrixXd alg_sensitivities;
};

struct ObservabilityReport {
  double eps_rank = 0.0;
  double eps_piv = 0.0;
  std::vector<DirectionReport> directions;
  // Index sets into diff_states / alg_states.
  std::vector<int> chi_lno;
  std::vector<int> chi_lo;
  std::vector<int> alpha_lno;
  std::vector<int> alpha_lo;
};

struct LsercOptions {
  IntegratorOptions integrator;
  double eps_rank = 1e-6;
  double eps_piv = 1e-8;
  Execution execution = Execution::parallel;
};

/// L-SERC observability test over every probe. Per-probe pipelines run
/// concurrently under Execution::parallel; Execution::serial is the
/// reference path and yields bitwise-identical reports.
ObservabilityReport run_lserc(const DaeModel& model, const Eigen::VectorXd& x0, const Eigen::VectorXd& w0, double t0,
                              double tf, std::span<const Probe> probes, std::span<const double> sample_times,
                              const LsercOptions& options = {});

nlohmann::json report_to_json(const ObservabilityReport& report, const DaeModel& model);

}  // namespace daeobs
