#include "daeobs/sekf.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "daeobs/csv.hpp"

namespace daeobs {

namespace {

Eigen::VectorXd draw(std::mt19937_64& gen, std::normal_distribution<double>& normal, Eigen::Index n) {
  Eigen::VectorXd xi(n);
  for (Eigen::Index i = 0; i < n; ++i) xi(i) = normal(gen);
  return xi;
}

void check_increasing(std::span<const double> times, double t0, const char* what) {
  double prev = t0;
  for (double t : times) {
    if (!(t > prev)) throw std::invalid_argument(std::string(what) + " times must be strictly increasing after t0");
    prev = t;
  }
}

std::vector<double> flatten(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

}  // namespace

NoiseSpec NoiseSpec::isotropic(int n_x, double q, int n_y, double r, std::uint64_t seed) {
  return {q * Eigen::MatrixXd::Identity(n_x, n_x), r * Eigen::MatrixXd::Identity(n_y, n_y), seed};
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& S, const std::string& what) {
  if (S.rows() != S.cols()) throw std::invalid_argument(what + " must be square");
  if (!S.allFinite()) throw std::invalid_argument(what + " has non-finite entries");
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw std::invalid_argument(what + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  const Eigen::VectorXd lambda = eig.eigenvalues();
  if (lambda.size() > 0 && lambda.minCoeff() < -1e-12 * scale) {
    throw std::invalid_argument(what + " is not positive semidefinite");
  }
  return eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

std::vector<double> measurement_times(double t0, double tf, int steps) {
  if (steps < 1) throw std::invalid_argument("need at least one measurement step");
  if (!(tf > t0)) throw std::invalid_argument("tf must exceed t0");
  std::vector<double> out(static_cast<std::size_t>(steps));
  for (int k = 1; k <= steps; ++k) out[std::size_t(k - 1)] = t0 + (tf - t0) * double(k) / double(steps);
  out.back() = tf;
  return out;
}

TruthRun synthesize_truth(const DaeModel& model, const NoiseSpec& noise, double t0, double tf, double dt_sim,
                          std::span<const double> meas_times, const Eigen::VectorXd& x0, const Eigen::VectorXd& w0,
                          const NewtonOptions& newton) {
  if (!(dt_sim > 0.0)) throw std::invalid_argument("dt_sim must be positive");
  if (tf < t0) throw std::invalid_argument("tf must not precede t0");
  if (noise.Q.rows() != model.n_x() || noise.R.rows() != model.n_y()) {
    throw std::invalid_argument("noise covariance dimensions do not match the model");
  }
  check_increasing(meas_times, t0, "measurement");
  if (!meas_times.empty() && meas_times.back() > tf) throw std::invalid_argument("measurement time beyond tf");
  const Eigen::MatrixXd FQ = psd_factor(noise.Q, "Q");
  const Eigen::MatrixXd FR = psd_factor(noise.R, "R");
  if (algebraic_residual(model, t0, x0, w0) > newton.tol) {
    throw ConvergenceError("truth initial condition is not consistent", t0, algebraic_residual(model, t0, x0, w0));
  }

  std::mt19937_64 gen(noise.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  TruthRun run;
  Trajectory& tr = run.truth;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd w = w0;
  const auto record = [&](double t) {
    tr.times.push_back(t);
    tr.x.push_back(x);
    tr.w.push_back(w);
    tr.g_residuals.push_back(algebraic_residual(model, t, x, w));
  };
  const auto measure = [&](double t) {
    Eigen::VectorXd y = eval_values(model, Block::h, t, x, w);
    y += FR * draw(gen, normal, model.n_y());
    run.measurements.times.push_back(t);
    run.measurements.values.push_back(y);
  };

  record(t0);
  std::vector<double> nodes(meas_times.begin(), meas_times.end());
  if (nodes.empty() || nodes.back() < tf) nodes.push_back(tf);
  double a = t0;
  std::size_t next_meas = 0;
  for (double b : nodes) {
    const std::vector<double> grid = time_grid(a, b, dt_sim);
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const double dt = grid[i] - grid[i - 1];
      const Eigen::VectorXd f = eval_values(model, Block::f, grid[i - 1], x, w);
      x += f * dt + std::sqrt(dt) * (FQ * draw(gen, normal, model.n_x()));
      if (model.n_w() > 0) w = consistent_init(model, grid[i], x, w, newton);
      record(grid[i]);
    }
    if (next_meas < meas_times.size() && meas_times[next_meas] == b) {
      measure(b);
      ++next_meas;
    }
    a = b;
  }
  return run;
}

Prediction predict(const DaeModel& model, const Eigen::VectorXd& x_prev, const Eigen::VectorXd& w_prev, double t_prev,
                   double t_k, const IntegratorOptions& options) {
  const Trajectory tr = integrate_dae(model, t_prev, t_k, x_prev, w_prev, options);
  return {tr.x.back(), tr.w.back()};
}

UpdateResult measurement_update(const DaeModel& model, const SensitivityTrajectory& sens, const Eigen::MatrixXd& P,
                                const NoiseSpec& noise, const Eigen::VectorXd& y_m, std::span<const int> nonobs_diff,
                                const NewtonOptions& newton) {
  const int nx = model.n_x();
  if (P.rows() != nx || P.cols() != nx) throw std::invalid_argument("P has wrong dimensions");
  if (y_m.size() != model.n_y()) throw std::invalid_argument("measurement has wrong dimension");
  const double t = sens.base.times.back();
  const double dt = t - sens.base.times.front();
  const Eigen::MatrixXd& RM = sens.directions.right_inverse();

  UpdateResult u;
  const Eigen::VectorXd x_prior = sens.base.x.back();
  const Eigen::VectorXd w_prior = sens.base.w.back();
  u.Phi = sens.X.back() * RM;
  u.C = sens.Y.back() * RM;
  u.P_prior = u.Phi * P * u.Phi.transpose() + noise.Q * dt;
  u.y_pred = eval_values(model, Block::h, t, x_prior, w_prior);
  u.innovation = y_m - u.y_pred;

  const Eigen::MatrixXd S = noise.R + u.C * u.P_prior * u.C.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw NumericError("innovation covariance is not positive definite");
  u.L = llt.solve(u.C * u.P_prior).transpose();
  bool masked = false;
  for (int i : nonobs_diff) {
    masked = masked || !u.L.row(i).isZero(0.0);
    u.L.row(i).setZero();
  }

  u.x = x_prior + u.L * u.innovation;
  const Eigen::MatrixXd IKC = Eigen::MatrixXd::Identity(nx, nx) - u.L * u.C;
  if (masked && !u.L.isZero(0.0)) {
    // A partially zeroed gain is no longer optimal; (I - LC) P- would not be
    // the error covariance. Joseph form is exact for any gain.
    u.P = IKC * u.P_prior * IKC.transpose() + u.L * noise.R * u.L.transpose();
  } else {
    u.P = IKC * u.P_prior;
  }
  u.P = 0.5 * (u.P + u.P.transpose()).eval();

  try {
    u.w = model.n_w() > 0 ? consistent_init(model, t, u.x, w_prior, newton) : w_prior;
  } catch (const NumericError& e) {
    throw PosteriorConsistencyError(std::string("posterior is not consistently solvable: ") + e.what(), u.x);
  }
  return u;
}

int samples_per_interval(int n_x, int n_y) { return std::max(2, (n_x + n_y - 1) / n_y); }

FilterRun run_sekf(const DaeModel& model, const NoiseSpec& noise, double t0, const Eigen::VectorXd& x0,
                   const Eigen::VectorXd& w0, const Eigen::MatrixXd& P0, const MeasurementSeries& meas,
                   const SekfOptions& options) {
  const int nx = model.n_x();
  if (noise.Q.rows() != nx || noise.R.rows() != model.n_y()) {
    throw std::invalid_argument("noise covariance dimensions do not match the model");
  }
  psd_factor(noise.Q, "Q");
  if (Eigen::LLT<Eigen::MatrixXd>(noise.R).info() != Eigen::Success) {
    throw std::invalid_argument("R is not positive definite");
  }
  psd_factor(P0, "P0");
  if (P0.rows() != nx) throw std::invalid_argument("P0 has wrong dimensions");
  check_increasing(meas.times, t0, "measurement");
  if (meas.values.size() != meas.times.size()) throw std::invalid_argument("measurement series is ragged");

  const DirectionsMatrix M =
      options.probe ? DirectionsMatrix::probing(*options.probe) : DirectionsMatrix::identity(nx);
  LsercOptions lo;
  lo.integrator = options.integrator;
  lo.eps_rank = options.eps_rank;
  lo.eps_piv = options.eps_piv;
  lo.execution = options.execution;
  const std::vector<Probe> probes = axis_probes(nx);

  FilterRun run;
  run.t0 = t0;
  run.x0 = x0;
  run.w0 = w0;
  run.P0 = P0;
  run.noise = noise;
  run.m_kind = M.right_inverse_kind();
  run.samples_per_interval = samples_per_interval(nx, model.n_y());

  Eigen::VectorXd x = x0;
  Eigen::VectorXd w = w0;
  Eigen::MatrixXd P = P0;
  double t_prev = t0;
  for (std::size_t k = 0; k < meas.size(); ++k) {
    const double t = meas.times[k];
    try {
      const std::vector<double> samples = uniform_samples(t_prev, t, run.samples_per_interval);
      const ObservabilityReport obs = run_lserc(model, x, w, t_prev, t, probes, samples, lo);
      const SensitivityTrajectory sens = integrate_sensitivity(model, t_prev, t, x, w, M, options.integrator);
      const UpdateResult u =
          measurement_update(model, sens, P, noise, meas.values[k], obs.chi_lno, options.integrator.newton);

      FilterStep s;
      s.t = t;
      s.x_prior = sens.base.x.back();
      s.w_prior = sens.base.w.back();
      s.x = u.x;
      s.w = u.w;
      s.C = u.C;
      s.L = u.L;
      s.P = u.P;
      s.innovation = u.innovation;
      s.nonobs_diff = obs.chi_lno;
      s.nonobs_alg = obs.alpha_lno;
      s.g_residual = algebraic_residual(model, t, u.x, u.w);
      run.steps.push_back(std::move(s));
      x = u.x;
      w = u.w;
      P = u.P;
      t_prev = t;
    } catch (const std::exception& e) {
      throw SekfError("measurement step " + std::to_string(k + 1) + " at t = " + format_g17(t) + ": " + e.what(),
                      std::move(run));
    }
  }
  return run;
}

void write_measurements_csv(std::ostream& out, const DaeModel& model, const MeasurementSeries& meas) {
  out << "t";
  for (const auto& n : model.outputs()) out << ",y_" << n;
  out << '\n';
  for (std::size_t k = 0; k < meas.size(); ++k) {
    std::vector<double> row{meas.times[k]};
    row.insert(row.end(), meas.values[k].data(), meas.values[k].data() + meas.values[k].size());
    write_csv_row(out, row);
  }
}

MeasurementSeries read_measurements_csv(std::istream& in, const DaeModel& model) {
  const CsvTable table = read_csv(in);
  std::vector<std::string> expected{"t"};
  for (const auto& n : model.outputs()) expected.push_back("y_" + n);
  if (table.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw ParseError("measurement header must be '" + want + "'", 1, 1);
  }
  MeasurementSeries meas;
  for (const auto& row : table.rows) {
    meas.times.push_back(row[0]);
    meas.values.push_back(Eigen::Map<const Eigen::VectorXd>(row.data() + 1, Eigen::Index(row.size() - 1)));
  }
  return meas;
}

void write_filter_csv(std::ostream& out, const DaeModel& model, const FilterRun& run) {
  out << "t";
  for (const auto& n : model.diff_states()) out << ",xbar_" << n;
  for (const auto& n : model.alg_states()) out << ",wbar_" << n;
  for (const auto& n : model.outputs()) out << ",innov_" << n;
  for (int i = 1; i <= model.n_x(); ++i)
    for (int j = 1; j <= model.n_x(); ++j) out << ",P_" << i << '_' << j;
  out << ",nonobs_flags\n";
  for (const auto& s : run.steps) {
    std::vector<double> row{s.t};
    row.insert(row.end(), s.x.data(), s.x.data() + s.x.size());
    row.insert(row.end(), s.w.data(), s.w.data() + s.w.size());
    row.insert(row.end(), s.innovation.data(), s.innovation.data() + s.innovation.size());
    const auto p = flatten(s.P);
    row.insert(row.end(), p.begin(), p.end());
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_g17(row[i]);
    std::string flags(std::size_t(model.n_x() + model.n_w()), '0');
    for (int i : s.nonobs_diff) flags[std::size_t(i)] = '1';
    for (int i : s.nonobs_alg) flags[std::size_t(model.n_x() + i)] = '1';
    out << ',' << flags << '\n';
  }
}

nlohmann::json filter_metadata(const FilterRun& run, const SekfOptions& options) {
  const auto matrix = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(std::size_t(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[std::size_t(c)] = m(r, c);
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["seed"] = run.noise.seed;
  j["Q"] = matrix(run.noise.Q);
  j["R"] = matrix(run.noise.R);
  j["P0"] = matrix(run.P0);
  j["M_kind"] = run.m_kind == RightInverseKind::square_inverse ? "square" : "probing";
  if (options.probe) j["probe"] = std::vector<double>(options.probe->data(), options.probe->data() + options.probe->size());
  j["samples_per_interval"] = run.samples_per_interval;
  j["tolerances"] = {{"eps_rank", options.eps_rank},
                     {"eps_piv", options.eps_piv},
                     {"newton_tol", options.integrator.newton.tol},
                     {"step", options.integrator.step}};
  j["steps"] = run.steps.size();
  return j;
}

}  // namespace daeobs
