#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "daeobs/model.hpp"

namespace daeobs {

namespace {

double condition_estimate(const Eigen::MatrixXd& j) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  if (!s.allFinite()) return std::numeric_limits<double>::infinity();
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

// Residual at a trial point; domain errors count as "no decrease".
double trial_residual(const DaeModel& model, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& w) {
  try {
    const double r = algebraic_residual(model, t, x, w);
    return std::isfinite(r) ? r : std::numeric_limits<double>::infinity();
  } catch (const DomainError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

double algebraic_residual(const DaeModel& model, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& w) {
  if (model.n_w() == 0) return 0.0;
  return eval_values(model, Block::g, t, x, w).lpNorm<Eigen::Infinity>();
}

Eigen::VectorXd consistent_init(const DaeModel& model, double t0, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& w_guess, const NewtonOptions& options) {
  const int nw = model.n_w();
  if (w_guess.size() != nw) throw std::invalid_argument("algebraic guess has wrong size");
  if (nw == 0) return {};

  const Eigen::MatrixXd zero_x = Eigen::MatrixXd::Zero(model.n_x(), nw);
  const Eigen::MatrixXd unit_w = Eigen::MatrixXd::Identity(nw, nw);

  Eigen::VectorXd w = w_guess;
  double norm = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter <= options.max_iter; ++iter) {
    const LDEval e = eval_ld(model, Block::g, t0, x0, w, zero_x, unit_w);
    norm = e.value.lpNorm<Eigen::Infinity>();
    if (norm <= options.tol) return w;
    if (iter == options.max_iter) break;

    const double cond = condition_estimate(e.dirs);
    if (!(cond <= options.max_condition)) {
      throw RegularityError("algebraic Jacobian dg/dw is singular or ill-conditioned", t0, cond);
    }
    const Eigen::VectorXd step = e.dirs.partialPivLu().solve(-e.value);

    // Armijo backtracking on the residual norm.
    double lambda = 1.0;
    Eigen::VectorXd trial = w + step;
    while (lambda > 1.0 / 1024.0 && trial_residual(model, t0, x0, trial) > (1.0 - 1e-4 * lambda) * norm) {
      lambda *= 0.5;
      trial = w + lambda * step;
    }
    w = trial;
  }
  throw ConvergenceError("algebraic Newton iteration did not converge", t0, norm);
}

}  // namespace daeobs
