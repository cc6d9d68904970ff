// Acceptance checks: one PASS/FAIL line per criterion, with the measured
// quantity and the wall time against its budget. Exit status is the number
// of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "../tools/cli.hpp"
#include "daeobs/integrator.hpp"
#include "daeobs/ld_scalar.hpp"
#include "daeobs/model.hpp"
#include "daeobs/observability.hpp"
#include "daeobs/sekf.hpp"
#include "json.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace daeobs;
using testsupport::Gen;

namespace {

struct Outcome {
  bool ok;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Eigen::VectorXd w_init(const DaeModel& m) { return consistent_init(m, 0, m.x0(), *m.w0_guess()); }

double min_eig(const Eigen::MatrixXd& P) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().minCoeff();
}

Outcome smooth_output_rank() {
  const char* argv[] = {"daeobs", "obs", "--builtin", "wind-smooth", "--samples", "11", "--t0", "0", "--tf", "1"};
  std::ostringstream out, err;
  if (cli::run(10, argv, out, err) != 0) return {false, "obs failed: " + err.str()};
  const auto j = nlohmann::json::parse(out.str());
  bool ok = j["directions"].size() == 4;
  double worst = INFINITY;
  for (const auto& d : j["directions"]) {
    const auto sv = d["singular_values"].get<std::vector<double>>();
    ok = ok && d["rank"] == 2 && d["verdict"] == "L-SERC observable" && sv.size() >= 2;
    if (sv.size() >= 2) {
      const double margin = sv[1] / (1e-6 * std::max(sv[0], 1.0));
      worst = std::min(worst, margin);
      ok = ok && margin > 1.0;
    }
  }
  return {ok, "rank 2 in all 4 directions, sigma2 / threshold >= " + fmt("%.3g", worst)};
}

Outcome threshold_switch() {
  const DaeModel m = builtin_wind_turbine(WindOutput::min_threshold);
  const Eigen::VectorXd w0 = w_init(m);
  std::vector<SensitivityTrajectory> runs;
  for (const Probe& p : axis_probes(2)) runs.push_back(integrate_sensitivity(m, 0, 1, m.x0(), w0, p.matrix(2)));
  const std::size_t n = runs[0].base.size();
  auto row_norm = [&](std::size_t i) {
    double v = 0.0;
    for (const auto& s : runs)
      v = std::max(v, (s.Y[i] * s.directions.right_inverse()).cwiseAbs().maxCoeff());
    return v;
  };
  auto zero = [&](std::size_t i) { return row_norm(i) <= 1e-9; };
  if (!zero(0) || zero(n - 1)) return {false, "no sign change of the sensitivity rows on [0, 1]"};
  std::size_t lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    (zero(mid) ? lo : hi) = mid;
  }
  const double t_star = runs[0].base.times[hi];
  bool ok = std::abs(t_star - 0.057) <= 0.005;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (zero(i) != (i < hi)) ++bad;
  ok = ok && bad == 0;
  return {ok, "t* = " + fmt("%.4f", t_star) + ", samples off the zero/nonzero split: " + std::to_string(bad)};
}

double output_at(const DaeModel& m, const Eigen::VectorXd& x0, double t) {
  const Eigen::VectorXd w0 = consistent_init(m, 0, x0, *m.w0_guess());
  const Trajectory tr = integrate_dae(m, 0, t, x0, w0);
  return eval_values(m, Block::h, t, tr.x.back(), tr.w.back())(0);
}

Outcome sensitivity_fd() {
  const DaeModel m = builtin_wind_turbine(WindOutput::smooth);
  const SensitivityTrajectory s = integrate_sensitivity(m, 0, 1, m.x0(), w_init(m), DirectionsMatrix::identity(2));
  const double delta = 1e-6;
  double worst = 0.0;
  for (int k = 1; k <= 10; ++k) {
    const double t = 0.1 * k;
    const std::size_t i = s.base.nearest(t);
    for (int j = 0; j < 2; ++j) {
      const Eigen::VectorXd e = Eigen::VectorXd::Unit(2, j) * delta;
      const double fd = (output_at(m, m.x0() + e, t) - output_at(m, m.x0() - e, t)) / (2 * delta);
      worst = std::max(worst, std::abs(s.Y[i](0, j) - fd) / std::abs(fd));
    }
  }
  return {worst <= 1e-4, "max relative error " + fmt("%.3g", worst) + " over 20 entries"};
}

Outcome smooth_nonsmooth() {
  const DaeModel m = builtin_wind_turbine(WindOutput::smooth);
  const Eigen::VectorXd w0 = w_init(m);
  const auto samples = uniform_samples(0, 1, 11);
  const std::vector<Probe> square{Probe::identity()};
  const ObservabilityReport ref = run_lserc(m, m.x0(), w0, 0, 1, square, samples);
  Gen g(99);
  std::vector<Probe> probes = axis_probes(2);
  for (int i = 0; i < 4; ++i) probes.push_back(Probe::along(g.vector(2, -3, 3)));
  probes.push_back(Probe::along(Eigen::VectorXd::Zero(2)));
  bool ok = true;
  for (const Probe& p : probes) {
    const ObservabilityReport r = run_lserc(m, m.x0(), w0, 0, 1, std::vector<Probe>{p}, samples);
    ok = ok && r.directions[0].rank == ref.directions[0].rank && r.chi_lno == ref.chi_lno && r.chi_lo == ref.chi_lo &&
         r.alpha_lno == ref.alpha_lno && r.alpha_lo == ref.alpha_lo;
  }
  return {ok, std::to_string(probes.size()) + " probing directions vs M = I, rank " +
                  std::to_string(ref.directions[0].rank)};
}

Outcome tracking() {
  const DaeModel m = builtin_wind_turbine(WindOutput::smooth);
  int wins = 0;
  std::string ratios;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = testsupport::wind_tracking(m, seed, 1, 0.2);
    if (r.rmse_filter < r.rmse_open_loop) ++wins;
    ratios += (seed > 1 ? " " : "") + fmt("%.2g", r.rmse_filter / r.rmse_open_loop);
  }
  return {wins >= 9, std::to_string(wins) + "/10 seeds beat open loop; rmse ratios " + ratios};
}

Outcome gating() {
  const DaeModel m = builtin_wind_turbine(WindOutput::min_threshold);
  const auto r = testsupport::wind_tracking(m, 42, 1, 0.2);
  bool early = true, late = false;
  int n_early = 0;
  for (const FilterStep& s : r.run.steps) {
    if (s.t <= 0.05 + 1e-12) {
      ++n_early;
      early = early && s.nonobs_diff == std::vector<int>{0, 1} && s.nonobs_alg == std::vector<int>{0} &&
              s.L.isZero(0.0) && s.x == s.x_prior;
    }
    if (s.t > 0.07 && !s.L.isZero(0.0)) late = true;
  }
  return {early && late && n_early > 0,
          std::to_string(n_early) + " early steps gated, nonzero gain after 0.07: " + (late ? "yes" : "no")};
}

Outcome kalman_oracle() {
  Gen g(2024);
  double dx = 0.0, dp = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = inst % 2 == 0 ? 1 : 2;
    const auto lin = testsupport::random_linear(g, n);
    const double q = 1e-3, r = 1e-2;
    const MeasurementSeries meas = testsupport::linear_measurements(lin, g, 0.0, 1.0, 20, q, r);
    const Eigen::MatrixXd P0 = 2.0 * Eigen::MatrixXd::Identity(n, n);
    const FilterRun run = run_sekf(lin.model(), NoiseSpec::isotropic(n, q, 1, r, 0), 0.0, lin.x0,
                                   Eigen::VectorXd::Constant(1, lin.w_of(lin.x0)), P0, meas);
    const auto oracle = testsupport::linear_kalman(lin, q * Eigen::MatrixXd::Identity(n, n), r, P0, 0.0, meas);
    if (oracle.size() != run.steps.size()) return {false, "step count mismatch"};
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      dx = std::max(dx, (run.steps[k].x - oracle[k].x).cwiseAbs().maxCoeff());
      dp = std::max(dp, (run.steps[k].P - oracle[k].P).cwiseAbs().maxCoeff());
    }
  }
  return {dx <= 1e-8 && dp <= 1e-8, "20 instances, max |dx| " + fmt("%.3g", dx) + ", max |dP| " + fmt("%.3g", dp)};
}

Outcome hygiene() {
  std::vector<std::string> fails;

  // Fourth-order convergence on x' = -x (with the mirror w = x).
  ModelSpec s;
  s.diff_states = {"x"};
  s.alg_states = {"w"};
  s.f = {"-x"};
  s.g = {"w - x"};
  s.h = {"w"};
  s.x0 = {1};
  const DaeModel decay(s);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  IntegratorOptions coarse, fine;
  coarse.step = 0.1;
  fine.step = 0.05;
  const double e1 = std::abs(integrate_dae(decay, 0, 1, one, one, coarse).x.back()(0) - std::exp(-1.0));
  const double e2 = std::abs(integrate_dae(decay, 0, 1, one, one, fine).x.back()(0) - std::exp(-1.0));
  const double ratio = e1 / e2;
  if (ratio < 12 || ratio > 20) fails.push_back("order ratio " + fmt("%.3g", ratio));

  // Algebraic residuals of every run in the suite's scenarios.
  double worst_g = 0.0, worst_eig = INFINITY, worst_asym = 0.0;
  for (WindOutput out : {WindOutput::smooth, WindOutput::min_threshold}) {
    const DaeModel m = builtin_wind_turbine(out);
    const Eigen::VectorXd w0 = w_init(m);
    const Trajectory tr = integrate_dae(m, 0, 1, m.x0(), w0);
    for (double r : tr.g_residuals) worst_g = std::max(worst_g, r);
    const auto sens = integrate_sensitivity(m, 0, 1, m.x0(), w0, DirectionsMatrix::identity(2));
    for (double r : sens.base.g_residuals) worst_g = std::max(worst_g, r);
    for (std::uint64_t seed : {1u, 42u}) {
      const auto run = testsupport::wind_tracking(m, seed, 1, 0.2).run;
      for (const FilterStep& st : run.steps) {
        worst_g = std::max(worst_g, st.g_residual);
        worst_eig = std::min(worst_eig, min_eig(st.P));
        worst_asym = std::max(worst_asym, (st.P - st.P.transpose()).cwiseAbs().maxCoeff());
      }
    }
  }
  if (worst_g > 1e-10) fails.push_back("g residual " + fmt("%.3g", worst_g));
  if (worst_eig < -1e-10 || worst_asym != 0.0) fails.push_back("covariance eig " + fmt("%.3g", worst_eig));

  // LD-calculus unit properties.
  Gen g(7);
  int ld_bad = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = std::size_t(g.integer(0, 3));
    const LDScalar a = g.ld(k, trial % 2 == 0), b = g.ld(k, trial % 2 == 0);
    if (!(ld_min(a, b) == -ld_max(-a, -b))) ++ld_bad;
    if (ld_min(a, b).value() != std::min(a.value(), b.value())) ++ld_bad;
    if (ld_abs(a).value() != std::abs(a.value())) ++ld_bad;
  }
  auto smooth = [](const auto& x, const auto& y) { return ld_exp(x) * ld_sin(y) + x * x / (2.0 + ld_cos(y)); };
  auto smooth_d = [](double x, double y) { return std::exp(x) * std::sin(y) + x * x / (2.0 + std::cos(y)); };
  for (int trial = 0; trial < 300; ++trial) {
    const double x = g.uniform(-2, 2), y = g.uniform(-2, 2), h = 1e-6;
    const LDScalar r = smooth(LDScalar(x, {1.0, 0.0}), LDScalar(y, {0.0, 1.0}));
    const double gx = (smooth_d(x + h, y) - smooth_d(x - h, y)) / (2 * h);
    const double gy = (smooth_d(x, y + h) - smooth_d(x, y - h)) / (2 * h);
    if (testsupport::rel_err(r.dir(0), gx) >= 1e-6 || testsupport::rel_err(r.dir(1), gy) >= 1e-6) ++ld_bad;
    if (r.value() != smooth_d(x, y)) ++ld_bad;
  }
  if (ld_bad) fails.push_back(std::to_string(ld_bad) + " LD property violations");

  std::string detail = "order ratio " + fmt("%.4g", ratio) + ", max g residual " + fmt("%.2g", worst_g) +
                       ", min eig(P) " + fmt("%.2g", worst_eig) + ", LD properties ok";
  if (!fails.empty()) {
    detail = "failed:";
    for (const auto& f : fails) detail += " " + f + ";";
  }
  return {fails.empty(), detail};
}

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"Smooth-output observability", 5, smooth_output_rank},
      {"Threshold-output switching", 10, threshold_switch},
      {"Sensitivity correctness", 10, sensitivity_fd},
      {"Smooth/nonsmooth consistency", 0, smooth_nonsmooth},
      {"S-EKF tracking", 60, tracking},
      {"S-EKF gating", 0, gating},
      {"Kalman oracle equivalence", 0, kalman_oracle},
      {"Numerical hygiene suite", 0, hygiene},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome v{false, ""};
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool ok = v.ok;
    std::string timing = fmt("%.2f s", secs);
    if (c.budget_s > 0) {
      timing += fmt(" / %.0f s", c.budget_s);
      ok = ok && secs <= c.budget_s;
    }
    if (!ok) ++failures;
    std::printf("%s  %s: %s [%s]\n", ok ? "PASS" : "FAIL", c.name, v.detail.c_str(), timing.c_str());
  }
  return failures;
}
