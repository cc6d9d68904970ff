#include "daeobs/observability.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <set>
#include <stdexcept>

#include <Eigen/SVD>

namespace daeobs {

namespace {

std::string describe(const Probe& p) {
  if (!p.direction) return "identity";
  std::string s = "[";
  for (Eigen::Index i = 0; i < p.direction->size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string((*p.direction)(i));
  }
  return s + "]";
}

std::vector<std::size_t> sample_indices(const Trajectory& base, std::span<const double> sample_times) {
  if (sample_times.empty()) throw std::invalid_argument("at least one sample time is required");
  const double t0 = base.times.front();
  const double tf = base.times.back();
  const double slack = 1e-12 * std::max(1.0, std::abs(tf));
  std::vector<std::size_t> idx;
  idx.reserve(sample_times.size());
  for (double t : sample_times) {
    if (t < t0 - slack || t > tf + slack) {
      throw std::out_of_range("sample time " + std::to_string(t) + " outside [" + std::to_string(t0) + ", " +
                              std::to_string(tf) + "]");
    }
    idx.push_back(base.nearest(t));
  }
  return idx;
}

std::vector<int> complement(int n, const std::vector<int>& set) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    if (!std::binary_search(set.begin(), set.end(), i)) out.push_back(i);
  }
  return out;
}

DirectionReport analyze(const DaeModel& model, const Eigen::VectorXd& x0, const Eigen::VectorXd& w0, double t0,
                        double tf, const Probe& probe, std::span<const double> sample_times,
                        const LsercOptions& options) {
  const SensitivityTrajectory sens =
      integrate_sensitivity(model, t0, tf, x0, w0, probe.matrix(model.n_x()), options.integrator);
  DirectionReport r;
  r.upsilon = build_lserc(sens, sample_times);
  r.upsilon.probe = probe;
  const RankDecision rd = serc_rank(r.upsilon.entries, options.eps_rank);
  r.upsilon.singular_values = rd.singular_values;
  r.rank = rd.rank;
  r.verdict = rd.rank == model.n_x() ? Verdict::observable : Verdict::non_observable;
  r.nonobs_diff = nonobs_diff_states(rd.V, rd.rank, options.eps_piv);
  r.alg_sensitivities = stack_alg_sensitivities(sens, sample_times);
  return r;
}

}  // namespace

DirectionsMatrix Probe::matrix(int n_x) const {
  if (!direction) return DirectionsMatrix::identity(n_x);
  if (direction->size() != n_x) throw std::invalid_argument("probing direction has wrong dimension");
  return DirectionsMatrix::probing(*direction);
}

std::vector<Probe> axis_probes(int n_x) {
  std::vector<Probe> out;
  for (int i = 0; i < n_x; ++i) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(n_x, i);
    out.push_back(Probe::along(e));
    out.push_back(Probe::along(-e));
  }
  return out;
}

std::vector<double> uniform_samples(double t0, double tf, int count) {
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  if (count == 1) return {t0};
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[std::size_t(i)] = t0 + (tf - t0) * double(i) / double(count - 1);
  out.back() = tf;
  return out;
}

LSercMatrix build_lserc(const SensitivityTrajectory& sens, std::span<const double> sample_times) {
  const auto idx = sample_indices(sens.base, sample_times);
  const Eigen::MatrixXd& R = sens.directions.right_inverse();
  const Eigen::Index ny = sens.Y.front().rows();
  const Eigen::Index nx = R.cols();
  LSercMatrix m;
  m.entries.resize(Eigen::Index(idx.size()) * ny, nx);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    m.entries.middleRows(Eigen::Index(i) * ny, ny) = sens.Y[idx[i]] * R;
    m.sample_times.push_back(sens.base.times[idx[i]]);
  }
  if (sens.directions.right_inverse_kind() == RightInverseKind::drop_first_column) {
    m.probe = Probe::along(sens.directions.probe());
  }
  return m;
}

Eigen::MatrixXd stack_alg_sensitivities(const SensitivityTrajectory& sens, std::span<const double> sample_times) {
  const auto idx = sample_indices(sens.base, sample_times);
  const Eigen::MatrixXd& R = sens.directions.right_inverse();
  const Eigen::Index nw = sens.W.front().rows();
  Eigen::MatrixXd out(Eigen::Index(idx.size()) * nw, R.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.middleRows(Eigen::Index(i) * nw, nw) = sens.W[idx[i]] * R;
  return out;
}

RankDecision serc_rank(const Eigen::MatrixXd& upsilon, double eps_rank) {
  if (!(eps_rank > 0.0)) throw std::invalid_argument("eps_rank must be positive");
  if (!upsilon.allFinite()) throw NumericError("SERC matrix has non-finite entries");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(upsilon, Eigen::ComputeFullV);
  RankDecision d;
  d.singular_values = svd.singularValues();
  d.V = svd.matrixV();
  const double sigma1 = d.singular_values.size() > 0 ? d.singular_values(0) : 0.0;
  const double threshold = eps_rank * std::max(sigma1, 1.0);
  for (Eigen::Index i = 0; i < d.singular_values.size(); ++i) {
    if (d.singular_values(i) > threshold) ++d.rank;
  }
  return d;
}

Eigen::MatrixXd rref(Eigen::MatrixXd m, double eps_piv, std::vector<int>* pivot_columns) {
  Eigen::Index row = 0;
  for (Eigen::Index col = 0; col < m.cols() && row < m.rows(); ++col) {
    Eigen::Index p = row;
    m.col(col).tail(m.rows() - row).cwiseAbs().maxCoeff(&p);
    p += row;
    if (std::abs(m(p, col)) <= eps_piv) {
      m.col(col).tail(m.rows() - row).setZero();
      continue;
    }
    m.row(p).swap(m.row(row));
    m.row(row) /= m(row, col);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (r != row && m(r, col) != 0.0) m.row(r) -= m(r, col) * m.row(row);
    }
    if (pivot_columns) pivot_columns->push_back(int(col));
    ++row;
  }
  return m;
}

std::vector<int> nonobs_diff_states(const Eigen::MatrixXd& V, int rank, double eps_piv) {
  const int nx = int(V.cols());
  if (rank > nx) throw std::invalid_argument("rank exceeds state dimension");
  if (rank == nx) return {};
  const Eigen::MatrixXd vr = V.rightCols(nx - rank);
  std::vector<int> pivots;
  rref(vr.transpose(), eps_piv, &pivots);
  return pivots;
}

std::vector<int> nonobs_alg_states(const Eigen::MatrixXd& stacked_alg_sens, int n_w, std::span<const int> J,
                                   double eps_rank) {
  if (J.empty() || n_w == 0 || stacked_alg_sens.size() == 0) return {};
  const double threshold = eps_rank * std::max(1.0, stacked_alg_sens.cwiseAbs().maxCoeff());
  const Eigen::Index samples = stacked_alg_sens.rows() / n_w;
  std::vector<int> out;
  for (int i = 0; i < n_w; ++i) {
    double largest = 0.0;
    for (Eigen::Index s = 0; s < samples; ++s) {
      for (int j : J) largest = std::max(largest, std::abs(stacked_alg_sens(s * n_w + i, j)));
    }
    if (largest > threshold) out.push_back(i);
  }
  return out;
}

std::vector<int> nonobs_alg_states(const SensitivityTrajectory& sens, std::span<const double> sample_times,
                                   std::span<const int> J, double eps_rank) {
  const int nw = int(sens.W.front().rows());
  return nonobs_alg_states(stack_alg_sensitivities(sens, sample_times), nw, J, eps_rank);
}

ObservabilityReport run_lserc(const DaeModel& model, const Eigen::VectorXd& x0, const Eigen::VectorXd& w0, double t0,
                              double tf, std::span<const Probe> probes, std::span<const double> sample_times,
                              const LsercOptions& options) {
  if (probes.empty()) throw std::invalid_argument("at least one probing direction is required");
  if (!(options.eps_piv > 0.0) || !(options.eps_rank > 0.0)) throw std::invalid_argument("tolerances must be positive");

  const int n = int(probes.size());
  ObservabilityReport report;
  report.eps_rank = options.eps_rank;
  report.eps_piv = options.eps_piv;
  report.directions.resize(std::size_t(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));

  const bool parallel = options.execution == Execution::parallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int i = 0; i < n; ++i) {
    try {
      report.directions[std::size_t(i)] =
          analyze(model, x0, w0, t0, tf, probes[std::size_t(i)], sample_times, options);
    } catch (...) {
      errors[std::size_t(i)] = std::current_exception();
    }
  }

  for (int i = 0; i < n; ++i) {
    if (!errors[std::size_t(i)]) continue;
    const std::string tag = "direction " + describe(probes[std::size_t(i)]) + ": ";
    try {
      std::rethrow_exception(errors[std::size_t(i)]);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(tag + e.what());
    } catch (const std::out_of_range& e) {
      throw std::out_of_range(tag + e.what());
    } catch (const std::exception& e) {
      throw NumericError(tag + e.what());
    }
  }

  std::set<int> chi;
  for (const auto& d : report.directions) chi.insert(d.nonobs_diff.begin(), d.nonobs_diff.end());
  report.chi_lno.assign(chi.begin(), chi.end());
  report.chi_lo = complement(model.n_x(), report.chi_lno);

  std::set<int> alpha;
  for (const auto& d : report.directions) {
    const auto a = nonobs_alg_states(d.alg_sensitivities, model.n_w(), report.chi_lno, options.eps_rank);
    alpha.insert(a.begin(), a.end());
  }
  report.alpha_lno.assign(alpha.begin(), alpha.end());
  report.alpha_lo = complement(model.n_w(), report.alpha_lno);
  return report;
}

nlohmann::json report_to_json(const ObservabilityReport& report, const DaeModel& model) {
  using nlohmann::json;
  const auto names = [](const std::vector<std::string>& all, const std::vector<int>& idx) {
    json out = json::array();
    for (int i : idx) out.push_back(all[std::size_t(i)]);
    return out;
  };
  json dirs = json::array();
  for (const auto& d : report.directions) {
    json entry;
    if (d.upsilon.probe.direction) {
      entry["direction"] = std::vector<double>(d.upsilon.probe.direction->data(),
                                               d.upsilon.probe.direction->data() + d.upsilon.probe.direction->size());
    } else {
      entry["direction"] = "identity";
    }
    entry["singular_values"] = std::vector<double>(d.upsilon.singular_values.data(),
                                                   d.upsilon.singular_values.data() + d.upsilon.singular_values.size());
    entry["rank"] = d.rank;
    entry["verdict"] = d.verdict == Verdict::observable ? "L-SERC observable" : "L-SERC non-observable";
    entry["nonobservable_differential"] = names(model.diff_states(), d.nonobs_diff);
    entry["sample_times"] = d.upsilon.sample_times;
    json rows = json::array();
    for (Eigen::Index r = 0; r < d.upsilon.entries.rows(); ++r) {
      std::vector<double> row(std::size_t(d.upsilon.entries.cols()));
      for (Eigen::Index c = 0; c < d.upsilon.entries.cols(); ++c) row[std::size_t(c)] = d.upsilon.entries(r, c);
      rows.push_back(row);
    }
    entry["upsilon"] = rows;
    dirs.push_back(entry);
  }
  json out;
  out["tolerances"] = {{"eps_rank", report.eps_rank}, {"eps_piv", report.eps_piv}};
  out["directions"] = dirs;
  out["sets"] = {{"chi_lno", names(model.diff_states(), report.chi_lno)},
                 {"chi_lo", names(model.diff_states(), report.chi_lo)},
                 {"alpha_lno", names(model.alg_states(), report.alpha_lno)},
                 {"alpha_lo", names(model.alg_states(), report.alpha_lo)}};
  return out;
}

}  // namespace daeobs
