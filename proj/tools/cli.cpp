#include "cli.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "daeobs/csv.hpp"
#include "daeobs/errors.hpp"
#include "daeobs/integrator.hpp"
#include "daeobs/model.hpp"
#include "daeobs/observability.hpp"
#include "daeobs/sekf.hpp"
#include "json.hpp"

namespace daeobs::cli {

namespace {

constexpr const char* kSchema = R"(Model document (YAML):
  name: string                       optional
  diff_states: [x1, ...]             required, n_x >= 1
  alg_states: [w1, ...]              optional
  outputs: [y1, ...]                 optional, defaults to y1..y<n_y>
  params: {name: number, ...}        optional constants
  inputs_u: {name: expr(t, params)}  optional, usable in f and h
  inputs_v: {name: expr(t, params)}  optional, usable in g and h
  f: [expr, ...]                     one per differential state
  g: [expr, ...]                     one per algebraic state
  h: [expr, ...]                     one per output
  x0: [number, ...]                  initial differential states
  w0_guess: [number, ...]            Newton guess for consistent w0

Expressions: + - * / ^ (right associative), unary minus, numbers,
identifiers, and min max abs exp log sqrt sin cos.
Builtins: wind-smooth (y = E_q * V), wind-min (y = min(V, 0.98)).)";

struct RunConfig {
  std::string command;
  std::string model_path;
  std::string builtin;
  std::vector<std::string> augment;
  double t_init = 0.0;
  double t0 = 0.0;
  double tf = 1.0;
  double h = 1e-3;
  double newton_tol = 1e-10;
  // obs
  int samples = 11;
  std::string directions = "pm-axes";
  double eps_rank = 1e-6;
  double eps_piv = 1e-8;
  bool serial = false;
  // sekf
  std::string meas_path;
  bool synthesize = false;
  std::uint64_t seed = 0;
  int steps = 50;
  std::string p0 = "4";
  std::string q = "1e-4";
  std::string r = "1e-4";
  double dt_sim = 1e-3;
  std::string probe;
  std::string out;
};

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["command"] = c.command;
  if (!c.model_path.empty()) j["model"] = c.model_path;
  if (!c.builtin.empty()) j["builtin"] = c.builtin;
  j["augment"] = c.augment;
  j["t_init"] = c.t_init;
  j["t0"] = c.t0;
  j["tf"] = c.tf;
  j["h"] = c.h;
  j["newton_tol"] = c.newton_tol;
  if (c.command == "obs") {
    j["samples"] = c.samples;
    j["directions"] = c.directions;
    j["eps_rank"] = c.eps_rank;
    j["eps_piv"] = c.eps_piv;
  }
  if (c.command == "sekf") {
    j["measurements"] = c.synthesize ? std::string("synthesized") : c.meas_path;
    j["seed"] = c.seed;
    j["steps"] = c.steps;
    j["p0"] = c.p0;
    j["q"] = c.q;
    j["r"] = c.r;
    j["dt_sim"] = c.dt_sim;
    j["probe"] = c.probe.empty() ? std::string("identity") : c.probe;
    j["eps_rank"] = c.eps_rank;
    j["eps_piv"] = c.eps_piv;
  }
  return j;
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ',' || text[i] == ' ' || text[i] == '\t')) ++i;
    if (i >= text.size()) break;
    double v = 0.0;
    const char* begin = text.data() + i;
    auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), v);
    if (ec != std::errc()) throw UsageError("bad number in " + what + ": '" + text + "'");
    i += std::size_t(ptr - begin);
    out.push_back(v);
  }
  return out;
}

std::optional<double> as_scalar(const std::string& text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

// A scalar s means s * I; anything else names a file with one matrix row per line.
Eigen::MatrixXd matrix_arg(const std::string& text, int n, const std::string& what) {
  if (auto s = as_scalar(text)) return *s * Eigen::MatrixXd::Identity(n, n);
  std::ifstream in(text);
  if (!in) throw UsageError(what + ": '" + text + "' is neither a number nor a readable file");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(parse_numbers(line, what));
  }
  if (int(rows.size()) != n) throw UsageError(what + " must have " + std::to_string(n) + " rows");
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) {
    if (int(rows[std::size_t(i)].size()) != n) throw UsageError(what + " must have " + std::to_string(n) + " columns");
    for (int j = 0; j < n; ++j) m(i, j) = rows[std::size_t(i)][std::size_t(j)];
  }
  return m;
}

std::vector<Probe> parse_directions(const std::string& spec, int n_x) {
  if (spec == "pm-axes") return axis_probes(n_x);
  if (spec == "identity") return {Probe::identity()};
  std::vector<Probe> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto v = parse_numbers(item, "--directions");
    if (int(v.size()) != n_x) throw UsageError("each direction needs " + std::to_string(n_x) + " entries");
    out.push_back(Probe::along(Eigen::Map<const Eigen::VectorXd>(v.data(), n_x)));
  }
  if (out.empty()) throw UsageError("--directions is empty");
  return out;
}

DaeModel load(const RunConfig& c) {
  DaeModel m = c.builtin.empty() ? load_model(c.model_path)
               : c.builtin == "wind-smooth" ? builtin_wind_turbine(WindOutput::smooth)
               : c.builtin == "wind-min"    ? builtin_wind_turbine(WindOutput::min_threshold)
                                            : throw UsageError("unknown builtin '" + c.builtin + "'");
  if (!c.augment.empty()) m = augment_parameters(m, c.augment);
  return m;
}

void check(const RunConfig& c) {
  if (!(c.tf >= c.t0)) throw UsageError("--tf must not precede --t0");
  if (!(c.t0 >= c.t_init)) throw UsageError("--t0 must not precede --t-init");
  if (!(c.h > 0.0)) throw UsageError("--h must be positive");
  if (!(c.newton_tol > 0.0) || !(c.eps_rank > 0.0) || !(c.eps_piv > 0.0)) {
    throw UsageError("tolerances must be positive");
  }
}

IntegratorOptions integrator_options(const RunConfig& c) {
  IntegratorOptions o;
  o.step = c.h;
  o.newton.tol = c.newton_tol;
  return o;
}

Eigen::VectorXd initial_w(const DaeModel& m, const RunConfig& c) {
  const Eigen::VectorXd guess = m.w0_guess().value_or(Eigen::VectorXd::Zero(m.n_w()));
  NewtonOptions n;
  n.tol = c.newton_tol;
  return consistent_init(m, c.t_init, m.x0(), guess, n);
}

// Opens --out, or falls back to the caller's stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw UsageError("cannot write '" + path + "'");
      stream_ = &file_;
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

void config_line(std::ostream& os, const RunConfig& c) { os << "# config: " << to_json(c).dump() << '\n'; }

int cmd_sim(const RunConfig& c, std::ostream& out) {
  const DaeModel m = load(c);
  const Trajectory full = integrate_dae(m, c.t_init, c.tf, m.x0(), initial_w(m, c), integrator_options(c));
  Trajectory tr;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (full.times[i] < c.t0 - 1e-12) continue;
    tr.times.push_back(full.times[i]);
    tr.x.push_back(full.x[i]);
    tr.w.push_back(full.w[i]);
    tr.g_residuals.push_back(full.g_residuals[i]);
  }
  Sink sink(c.out, out);
  config_line(sink.get(), c);
  write_trajectory_csv(sink.get(), m, tr);
  return 0;
}

int cmd_obs(const RunConfig& c, std::ostream& out) {
  const DaeModel m = load(c);
  if (c.samples < 1) throw UsageError("--samples must be >= 1");
  LsercOptions o;
  o.integrator = integrator_options(c);
  o.eps_rank = c.eps_rank;
  o.eps_piv = c.eps_piv;
  o.execution = c.serial ? Execution::serial : Execution::parallel;
  const auto probes = parse_directions(c.directions, m.n_x());
  const auto samples = uniform_samples(c.t0, c.tf, c.samples);
  const ObservabilityReport report = run_lserc(m, m.x0(), initial_w(m, c), c.t_init, c.tf, probes, samples, o);
  nlohmann::json j = report_to_json(report, m);
  j["config"] = to_json(c);
  j["model"] = m.name();
  Sink sink(c.out, out);
  sink.get() << j.dump(2) << '\n';
  return 0;
}

int cmd_sekf(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.synthesize == !c.meas_path.empty()) throw UsageError("give exactly one of --meas FILE or --synthesize");
  const DaeModel m = load(c);
  const IntegratorOptions io = integrator_options(c);

  Eigen::VectorXd x0 = m.x0();
  Eigen::VectorXd w0 = initial_w(m, c);
  if (c.t0 > c.t_init) {
    const Trajectory lead = integrate_dae(m, c.t_init, c.t0, x0, w0, io);
    x0 = lead.x.back();
    w0 = lead.w.back();
  }

  NoiseSpec noise{matrix_arg(c.q, m.n_x(), "--q"), matrix_arg(c.r, m.n_y(), "--r"), c.seed};
  const Eigen::MatrixXd P0 = matrix_arg(c.p0, m.n_x(), "--p0");

  const std::string prefix = c.out.empty() ? std::string("sekf") : c.out;
  MeasurementSeries meas;
  if (c.synthesize) {
    if (c.steps < 1) throw UsageError("--steps must be >= 1");
    const auto times = measurement_times(c.t0, c.tf, c.steps);
    const TruthRun truth = synthesize_truth(m, noise, c.t0, c.tf, c.dt_sim, times, x0, w0, io.newton);
    meas = truth.measurements;
    std::ofstream tf(prefix + "_truth.csv");
    std::ofstream mf(prefix + "_meas.csv");
    if (!tf || !mf) throw UsageError("cannot write outputs with prefix '" + prefix + "'");
    config_line(tf, c);
    write_trajectory_csv(tf, m, truth.truth);
    config_line(mf, c);
    write_measurements_csv(mf, m, meas);
  } else {
    std::ifstream in(c.meas_path);
    if (!in) throw UsageError("cannot open measurement file '" + c.meas_path + "'");
    meas = read_measurements_csv(in, m);
  }

  SekfOptions o;
  o.integrator = io;
  o.eps_rank = c.eps_rank;
  o.eps_piv = c.eps_piv;
  o.execution = c.serial ? Execution::serial : Execution::parallel;
  if (!c.probe.empty()) {
    const auto d = parse_numbers(c.probe, "--probe");
    if (int(d.size()) != m.n_x()) throw UsageError("--probe needs " + std::to_string(m.n_x()) + " entries");
    o.probe = Eigen::Map<const Eigen::VectorXd>(d.data(), m.n_x());
  }

  const auto write_run = [&](const FilterRun& run) {
    std::ofstream ff(prefix + "_filter.csv");
    std::ofstream jf(prefix + "_meta.json");
    if (!ff || !jf) throw UsageError("cannot write outputs with prefix '" + prefix + "'");
    config_line(ff, c);
    write_filter_csv(ff, m, run);
    nlohmann::json meta = filter_metadata(run, o);
    meta["config"] = to_json(c);
    meta["generator"] = "std::mt19937_64 + std::normal_distribution, Euler-Maruyama";
    jf << meta.dump(2) << '\n';
  };

  try {
    const FilterRun run = run_sekf(m, noise, c.t0, x0, w0, P0, meas, o);
    write_run(run);
    out << "wrote " << prefix << "_filter.csv (" << run.steps.size() << " steps)\n";
  } catch (const SekfError& e) {
    write_run(e.partial());
    err << "error: " << e.what() << " (partial run written)\n";
    return 2;
  }
  return 0;
}

void add_common(CLI::App* sub, RunConfig& c) {
  auto* model = sub->add_option("--model", c.model_path, "model document (YAML)")->check(CLI::ExistingFile);
  auto* builtin = sub->add_option("--builtin", c.builtin, "builtin model: wind-smooth | wind-min");
  model->excludes(builtin);
  builtin->excludes(model);
  sub->add_option("--augment", c.augment, "parameters to turn into constant differential states");
  sub->add_option("--t-init", c.t_init, "time at which x0 holds")->capture_default_str();
  sub->add_option("--t0", c.t0, "window start")->capture_default_str();
  sub->add_option("--tf", c.tf, "window end")->capture_default_str();
  sub->add_option("--h", c.h, "integration step")->capture_default_str();
  sub->add_option("--newton-tol", c.newton_tol, "g residual tolerance")->capture_default_str();
  sub->add_option("--out", c.out, "output path (sekf: file prefix)");
}

void add_tolerances(CLI::App* sub, RunConfig& c) {
  sub->add_option("--eps-rank", c.eps_rank, "relative singular value threshold")->capture_default_str();
  sub->add_option("--eps-piv", c.eps_piv, "rref pivot threshold")->capture_default_str();
  sub->add_flag("--serial", c.serial, "run directions sequentially");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"DAE simulation, L-SERC observability, and S-EKF estimation"};
  app.set_help_flag("--help", "print help and the model schema");
  app.footer(kSchema);
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("sim", "integrate the DAE and write the trajectory CSV");
  add_common(sim, c);

  auto* obs = app.add_subcommand("obs", "L-SERC observability report (JSON)");
  add_common(obs, c);
  add_tolerances(obs, c);
  obs->add_option("--samples", c.samples, "number of uniform sample times on [t0, tf]")->capture_default_str();
  obs->add_option("--directions", c.directions, "pm-axes | identity | 'd11,d12;d21,d22'")->capture_default_str();

  auto* sekf = app.add_subcommand("sekf", "S-EKF state estimation");
  add_common(sekf, c);
  add_tolerances(sekf, c);
  sekf->add_option("--meas", c.meas_path, "measurement CSV (t,y_<name>...)")->check(CLI::ExistingFile);
  sekf->add_flag("--synthesize", c.synthesize, "synthesize noisy truth and measurements");
  sekf->add_option("--seed", c.seed, "noise seed")->capture_default_str();
  sekf->add_option("--steps", c.steps, "number of synthesized measurements")->capture_default_str();
  sekf->add_option("--p0", c.p0, "initial covariance: scalar (times I) or matrix file")->capture_default_str();
  sekf->add_option("--q", c.q, "process noise covariance: scalar or matrix file")->capture_default_str();
  sekf->add_option("--r", c.r, "measurement noise covariance: scalar or matrix file")->capture_default_str();
  sekf->add_option("--dt-sim", c.dt_sim, "Euler-Maruyama step")->capture_default_str();
  sekf->add_option("--probe", c.probe, "probing direction d of M = [d I] (default M = I)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    if (sim->parsed()) c.command = "sim";
    if (obs->parsed()) c.command = "obs";
    if (sekf->parsed()) c.command = "sekf";
    if (c.model_path.empty() && c.builtin.empty()) throw UsageError("one of --model or --builtin is required");
    check(c);
    if (c.command == "sim") return cmd_sim(c, out);
    if (c.command == "obs") return cmd_obs(c, out);
    return cmd_sekf(c, out, err);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace daeobs::cli
