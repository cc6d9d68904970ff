#include "daeobs/integrator.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include <Eigen/SVD>

#include "daeobs/csv.hpp"

namespace daeobs {

namespace {

double condition_of(const Eigen::MatrixXd& j) {
  if (j.size() == 0) return 1.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
  const auto& s = svd.singularValues();
  if (!s.allFinite() || s(s.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

// Column equation r(Wc) = column j of g'(...; (X, W, 0)) with Wc in slot j,
// plus its lexicographic Jacobian with respect to Wc taken from n_w trailing
// unit directions.
struct ColumnProbe {
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
};

class ColumnSystem {
 public:
  ColumnSystem(const DaeModel& model, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& w,
               const Eigen::MatrixXd& X, const Eigen::MatrixXd& W_prefix)
      : model_(model), t_(t), x_(x), w_(w), j_(W_prefix.cols()) {
    const Eigen::Index nx = model.n_x();
    const Eigen::Index nw = model.n_w();
    const Eigen::Index k = j_ + 1 + nw;
    xd_ = Eigen::MatrixXd::Zero(nx, k);
    xd_.leftCols(j_ + 1) = X.leftCols(j_ + 1);
    wd_ = Eigen::MatrixXd::Zero(nw, k);
    wd_.leftCols(j_) = W_prefix;
    wd_.rightCols(nw).setIdentity();
  }

  ColumnProbe probe(const Eigen::VectorXd& wc, std::span<const signed char> forced = {}) {
    wd_.col(j_) = wc;
    const LDEval e = eval_ld(model_, Block::g, t_, x_, w_, xd_, wd_, forced);
    return {e.dirs.col(j_), e.dirs.rightCols(model_.n_w())};
  }

  double scale() const { return std::max(1.0, xd_.col(j_).lpNorm<Eigen::Infinity>()); }

 private:
  const DaeModel& model_;
  double t_;
  const Eigen::VectorXd& x_;
  const Eigen::VectorXd& w_;
  Eigen::Index j_;
  Eigen::MatrixXd xd_;
  Eigen::MatrixXd wd_;
};

}  // namespace

std::size_t Trajectory::nearest(double t) const {
  if (times.empty()) throw std::logic_error("empty trajectory");
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end()) return times.size() - 1;
  const std::size_t hi = std::size_t(it - times.begin());
  if (hi == 0) return 0;
  return (t - times[hi - 1] <= times[hi] - t) ? hi - 1 : hi;
}

std::vector<double> time_grid(double t0, double tf, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");
  if (!(tf >= t0)) throw std::invalid_argument("final time must not precede initial time");
  std::vector<double> times{t0};
  if (tf == t0) return times;
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil((tf - t0) / h - 1e-9)));
  times.reserve(n + 1);
  for (std::size_t i = 1; i < n; ++i) times.push_back(t0 + double(i) * h);
  times.push_back(tf);
  return times;
}

Eigen::VectorXd solve_sensitivity_algebraic(const DaeModel& model, double t, const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& w, const Eigen::MatrixXd& X,
                                            const Eigen::MatrixXd& W_prefix, const IntegratorOptions& options) {
  const int nw = model.n_w();
  const Eigen::Index j = W_prefix.cols();
  if (X.cols() < j + 1 || X.rows() != model.n_x() || W_prefix.rows() != nw) {
    throw std::invalid_argument("solve_sensitivity_algebraic: shape mismatch");
  }
  if (nw == 0) return {};

  ColumnSystem system(model, t, x, w, X, W_prefix);
  const double tol = options.newton.tol * system.scale();

  // Semismooth Newton on the piecewise-linear column equation.
  Eigen::VectorXd wc = Eigen::VectorXd::Zero(nw);
  for (int iter = 0; iter < options.column_max_iter; ++iter) {
    const ColumnProbe p = system.probe(wc);
    const double r = p.residual.lpNorm<Eigen::Infinity>();
    if (r <= tol * std::max(1.0, wc.lpNorm<Eigen::Infinity>())) return wc;
    const double cond = condition_of(p.jacobian);
    if (!(cond <= options.newton.max_condition)) {
      if (model.is_smooth(Block::g)) {
        throw RegularityError("singular algebraic sensitivity system in column " + std::to_string(j), t, cond);
      }
      break;
    }
    wc -= p.jacobian.partialPivLu().solve(p.residual);
  }

  // Every branch fixing makes the column equation linear: solve it and keep
  // the first solution consistent with the unforced lexicographic rules.
  const int m = model.nonsmooth_count(Block::g);
  if (m > 0 && m <= options.branch_cap) {
    std::vector<signed char> forced(std::size_t(m), 0);
    for (unsigned mask = 0; mask < (1u << m); ++mask) {
      for (int b = 0; b < m; ++b) forced[std::size_t(b)] = static_cast<signed char>((mask >> b) & 1u);
      const ColumnProbe p = system.probe(Eigen::VectorXd::Zero(nw), forced);
      if (!(condition_of(p.jacobian) <= options.newton.max_condition)) continue;
      const Eigen::VectorXd candidate = p.jacobian.partialPivLu().solve(-p.residual);
      const ColumnProbe check = system.probe(candidate);
      if (check.residual.lpNorm<Eigen::Infinity>() <= tol * std::max(1.0, candidate.lpNorm<Eigen::Infinity>())) {
        return candidate;
      }
    }
    throw NumericError("algebraic sensitivity column " + std::to_string(j) + " at t = " + std::to_string(t) +
                       ": no branch fixing yields a consistent solution");
  }
  throw NumericError("algebraic sensitivity column " + std::to_string(j) + " at t = " + std::to_string(t) +
                     ": semismooth Newton did not converge");
}

Eigen::MatrixXd solve_algebraic_sensitivities(const DaeModel& model, double t, const Eigen::VectorXd& x,
                                              const Eigen::VectorXd& w, const Eigen::MatrixXd& X,
                                              const IntegratorOptions& options) {
  const int nx = model.n_x();
  const int nw = model.n_w();
  const Eigen::Index k = X.cols();
  if (nw == 0) return Eigen::MatrixXd(0, k);

  if (model.is_smooth(Block::g)) {
    // g' = (dg/dx) X + (dg/dw) W, linear in every column.
    Eigen::MatrixXd xd = Eigen::MatrixXd::Zero(nx, k + nw);
    xd.leftCols(k) = X;
    Eigen::MatrixXd wd = Eigen::MatrixXd::Zero(nw, k + nw);
    wd.rightCols(nw).setIdentity();
    const LDEval e = eval_ld(model, Block::g, t, x, w, xd, wd);
    const Eigen::MatrixXd gw = e.dirs.rightCols(nw);
    const double cond = condition_of(gw);
    if (!(cond <= options.newton.max_condition)) {
      throw RegularityError("singular algebraic sensitivity system", t, cond);
    }
    return gw.partialPivLu().solve(-e.dirs.leftCols(k));
  }

  Eigen::MatrixXd W(nw, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    W.col(j) = solve_sensitivity_algebraic(model, t, x, w, X.leftCols(j + 1), W.leftCols(j), options);
  }
  return W;
}

namespace {

// One RK stage of the combined state/sensitivity system.
struct StageResult {
  Eigen::VectorXd w;
  Eigen::MatrixXd W;
  Eigen::VectorXd dx;
  Eigen::MatrixXd dX;
};

class Stepper {
 public:
  Stepper(const DaeModel& model, const DirectionsMatrix* M, const IntegratorOptions& options)
      : model_(model), M_(M), options_(options) {}

  bool with_sensitivities() const { return M_ != nullptr; }

  Eigen::MatrixXd solve_W(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& w, const Eigen::MatrixXd& X) const {
    return solve_algebraic_sensitivities(model_, t, x, w, X, options_);
  }

  // Evaluates f (and f') at a point whose algebraic part is already solved.
  void rates(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& w, const Eigen::MatrixXd& X,
             const Eigen::MatrixXd& W, StageResult& out) const {
    if (with_sensitivities()) {
      const LDEval e = eval_ld(model_, Block::f, t, x, w, X, W);
      out.dx = e.value;
      out.dX = e.dirs;
    } else {
      out.dx = eval_values(model_, Block::f, t, x, w);
    }
  }

  StageResult stage(double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& X, const Eigen::VectorXd& w_warm) const {
    StageResult r;
    r.w = consistent_init(model_, t, x, w_warm, options_.newton);
    if (with_sensitivities()) r.W = solve_W(t, x, r.w, X);
    rates(t, x, r.w, X, r.W, r);
    return r;
  }

 private:
  const DaeModel& model_;
  const DirectionsMatrix* M_;
  const IntegratorOptions& options_;
};

SensitivityTrajectory integrate_impl(const DaeModel& model, double t0, double tf, const Eigen::VectorXd& x0,
                                     const Eigen::VectorXd& w0, const DirectionsMatrix* M,
                                     const IntegratorOptions& options) {
  if (x0.size() != model.n_x() || w0.size() != model.n_w()) {
    throw std::invalid_argument("initial state has wrong dimension");
  }
  const std::vector<double> grid = time_grid(t0, tf, options.step);
  const double r0 = algebraic_residual(model, t0, x0, w0);
  if (!(r0 <= options.newton.tol)) {
    throw ConvergenceError("initial conditions are not consistent with g = 0", t0, r0);
  }

  SensitivityTrajectory out{Trajectory{}, M ? *M : DirectionsMatrix::identity(model.n_x()), {}, {}, {}};
  Trajectory& base = out.base;
  base.times.reserve(grid.size());
  base.x.reserve(grid.size());
  base.w.reserve(grid.size());
  base.g_residuals.reserve(grid.size());

  const Stepper stepper(model, M, options);
  const bool sens = M != nullptr;

  Eigen::VectorXd x = x0;
  Eigen::VectorXd w = w0;
  Eigen::MatrixXd X;
  Eigen::MatrixXd W;
  if (sens) {
    if (M->rows() != model.n_x()) throw std::invalid_argument("directions matrix must have n_x rows");
    X = M->entries();
    W = stepper.solve_W(t0, x, w, X);
  }

  const auto record = [&](double t, double residual) {
    base.times.push_back(t);
    base.x.push_back(x);
    base.w.push_back(w);
    base.g_residuals.push_back(residual);
    if (sens) {
      out.X.push_back(X);
      out.W.push_back(W);
      out.Y.push_back(eval_ld(model, Block::h, t, x, w, X, W).dirs);
    }
  };
  record(t0, r0);

  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double t = grid[i - 1];
    const double h = grid[i] - t;

    StageResult k1;
    k1.w = w;
    k1.W = W;
    stepper.rates(t, x, w, X, W, k1);

    const Eigen::VectorXd x2 = x + 0.5 * h * k1.dx;
    const Eigen::MatrixXd X2 = sens ? Eigen::MatrixXd(X + 0.5 * h * k1.dX) : X;
    const StageResult k2 = stepper.stage(t + 0.5 * h, x2, X2, k1.w);

    const Eigen::VectorXd x3 = x + 0.5 * h * k2.dx;
    const Eigen::MatrixXd X3 = sens ? Eigen::MatrixXd(X + 0.5 * h * k2.dX) : X;
    const StageResult k3 = stepper.stage(t + 0.5 * h, x3, X3, k2.w);

    const Eigen::VectorXd x4 = x + h * k3.dx;
    const Eigen::MatrixXd X4 = sens ? Eigen::MatrixXd(X + h * k3.dX) : X;
    const StageResult k4 = stepper.stage(t + h, x4, X4, k3.w);

    x = x + (h / 6.0) * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    if (sens) X = X + (h / 6.0) * (k1.dX + 2.0 * k2.dX + 2.0 * k3.dX + k4.dX);
    w = consistent_init(model, grid[i], x, k4.w, options.newton);
    if (sens) W = stepper.solve_W(grid[i], x, w, X);
    record(grid[i], algebraic_residual(model, grid[i], x, w));
  }
  return out;
}

}  // namespace

Trajectory integrate_dae(const DaeModel& model, double t0, double tf, const Eigen::VectorXd& x0,
                         const Eigen::VectorXd& w0, const IntegratorOptions& options) {
  return integrate_impl(model, t0, tf, x0, w0, nullptr, options).base;
}

SensitivityTrajectory integrate_sensitivity(const DaeModel& model, double t0, double tf, const Eigen::VectorXd& x0,
                                            const Eigen::VectorXd& w0, const DirectionsMatrix& M,
                                            const IntegratorOptions& options) {
  return integrate_impl(model, t0, tf, x0, w0, &M, options);
}

void write_trajectory_csv(std::ostream& out, const DaeModel& model, const Trajectory& trajectory) {
  out << 't';
  for (const auto& n : model.diff_states()) out << ",x_" << n;
  for (const auto& n : model.alg_states()) out << ",w_" << n;
  out << ",g_resid\n";
  std::vector<double> row;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    row.clear();
    row.push_back(trajectory.times[i]);
    row.insert(row.end(), trajectory.x[i].data(), trajectory.x[i].data() + trajectory.x[i].size());
    row.insert(row.end(), trajectory.w[i].data(), trajectory.w[i].data() + trajectory.w[i].size());
    row.push_back(trajectory.g_residuals[i]);
    write_csv_row(out, row);
  }
}

}  // namespace daeobs
