#include "daeobs/model.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace daeobs {

namespace {

const std::set<std::string, std::less<>>& reserved_names() {
  static const std::set<std::string, std::less<>> names{"t", "min", "max", "abs", "exp", "log", "sqrt", "sin", "cos"};
  return names;
}

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

ExprPtr parse_field(const std::string& text, const std::string& field, int index) {
  try {
    return parse_expression(text);
  } catch (const ModelError&) {
    throw;
  } catch (const ParseError& e) {
    throw ModelError(e.detail(), field, index, e.column());
  }
}

Program compile_field(const ExprNode& ast, const SymbolTable& symbols, const std::string& field, int index,
                      const std::string& source) {
  try {
    return Program::compile(ast, symbols, field + "[" + std::to_string(index) + "]", source);
  } catch (const ParseError& e) {
    throw ModelError(e.detail(), field, index, e.column());
  }
}

}  // namespace

ModelError::ModelError(const std::string& message, std::string field, int index, int expr_column)
    : ParseError(field + (index >= 0 ? "[" + std::to_string(index) + "]" : std::string()) +
                 (expr_column > 0 ? " (expression column " + std::to_string(expr_column) + ")" : std::string()) +
                 ": " + message),
      field_(std::move(field)),
      index_(index),
      expr_column_(expr_column) {}

std::string_view block_name(Block b) {
  switch (b) {
    case Block::f: return "f";
    case Block::g: return "g";
    case Block::h: return "h";
  }
  return "?";
}

DaeModel::DaeModel(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.diff_states.empty()) throw ModelError("at least one differential state is required", "diff_states");
  if (spec_.h.empty()) throw ModelError("at least one output expression is required", "h");
  if (spec_.outputs.empty()) {
    for (std::size_t i = 0; i < spec_.h.size(); ++i) spec_.outputs.push_back("y" + std::to_string(i + 1));
  }

  const auto count = [](const auto& v) { return std::to_string(v.size()); };
  if (spec_.f.size() != spec_.diff_states.size()) {
    throw ModelError("expected " + count(spec_.diff_states) + " expressions (one per differential state), got " +
                         count(spec_.f),
                     "f");
  }
  if (spec_.g.size() != spec_.alg_states.size()) {
    throw ModelError("expected " + count(spec_.alg_states) + " expressions (one per algebraic state), got " +
                         count(spec_.g),
                     "g");
  }
  if (spec_.outputs.size() != spec_.h.size()) {
    throw ModelError("expected " + count(spec_.outputs) + " expressions (one per output), got " + count(spec_.h), "h");
  }
  if (spec_.x0.size() != spec_.diff_states.size()) {
    throw ModelError("expected " + count(spec_.diff_states) + " initial values, got " + count(spec_.x0), "x0");
  }
  if (spec_.w0_guess && spec_.w0_guess->size() != spec_.alg_states.size()) {
    throw ModelError("expected " + count(spec_.alg_states) + " values, got " + count(*spec_.w0_guess), "w0_guess");
  }

  // Identifier namespace shared by states, parameters and inputs.
  std::set<std::string, std::less<>> seen;
  const auto declare = [&](const std::string& name, const std::string& field, int index) {
    if (!valid_identifier(name)) throw ModelError("invalid name '" + name + "'", field, index);
    if (reserved_names().count(name) != 0) throw ModelError("'" + name + "' is reserved", field, index);
    if (!seen.insert(name).second) throw ModelError("duplicate name '" + name + "'", field, index);
  };
  for (std::size_t i = 0; i < spec_.diff_states.size(); ++i) declare(spec_.diff_states[i], "diff_states", int(i));
  for (std::size_t i = 0; i < spec_.alg_states.size(); ++i) declare(spec_.alg_states[i], "alg_states", int(i));
  for (std::size_t i = 0; i < spec_.params.size(); ++i) declare(spec_.params[i].first, "params", int(i));
  for (std::size_t i = 0; i < spec_.inputs_u.size(); ++i) declare(spec_.inputs_u[i].first, "inputs_u", int(i));
  for (std::size_t i = 0; i < spec_.inputs_v.size(); ++i) declare(spec_.inputs_v[i].first, "inputs_v", int(i));
  std::set<std::string> output_names;
  for (std::size_t i = 0; i < spec_.outputs.size(); ++i) {
    if (!valid_identifier(spec_.outputs[i])) throw ModelError("invalid name '" + spec_.outputs[i] + "'", "outputs", int(i));
    if (!output_names.insert(spec_.outputs[i]).second) {
      throw ModelError("duplicate name '" + spec_.outputs[i] + "'", "outputs", int(i));
    }
  }

  SymbolTable base;
  for (const auto& [name, value] : spec_.params) base[name] = {Symbol::Kind::constant, 0, value};
  base["t"] = {Symbol::Kind::time, 0, 0.0};

  // Input signals depend on t and parameters only.
  for (std::size_t i = 0; i < spec_.inputs_u.size(); ++i) {
    auto ast = parse_field(spec_.inputs_u[i].second, "inputs_u", int(i));
    u_.push_back(compile_field(*ast, base, "inputs_u", int(i), spec_.inputs_u[i].second));
  }
  for (std::size_t i = 0; i < spec_.inputs_v.size(); ++i) {
    auto ast = parse_field(spec_.inputs_v[i].second, "inputs_v", int(i));
    v_.push_back(compile_field(*ast, base, "inputs_v", int(i), spec_.inputs_v[i].second));
  }

  SymbolTable states = base;
  for (std::size_t i = 0; i < spec_.diff_states.size(); ++i) states[spec_.diff_states[i]] = {Symbol::Kind::x, int(i), 0.0};
  for (std::size_t i = 0; i < spec_.alg_states.size(); ++i) states[spec_.alg_states[i]] = {Symbol::Kind::w, int(i), 0.0};

  SymbolTable f_symbols = states;
  SymbolTable g_symbols = states;
  SymbolTable h_symbols = states;
  for (std::size_t i = 0; i < spec_.inputs_u.size(); ++i) {
    f_symbols[spec_.inputs_u[i].first] = {Symbol::Kind::u, int(i), 0.0};
    h_symbols[spec_.inputs_u[i].first] = {Symbol::Kind::u, int(i), 0.0};
  }
  for (std::size_t i = 0; i < spec_.inputs_v.size(); ++i) {
    g_symbols[spec_.inputs_v[i].first] = {Symbol::Kind::v, int(i), 0.0};
    h_symbols[spec_.inputs_v[i].first] = {Symbol::Kind::v, int(i), 0.0};
  }

  const auto build = [](const std::vector<std::string>& sources, const SymbolTable& symbols, const std::string& field,
                        const SymbolTable& all, std::vector<ExprPtr>& asts, std::vector<Program>& programs) {
    for (std::size_t i = 0; i < sources.size(); ++i) {
      auto ast = parse_field(sources[i], field, int(i));
      // Distinguish "declared but not allowed here" from "unknown".
      std::vector<std::pair<std::string, int>> ids;
      collect_identifiers(*ast, ids);
      for (const auto& [id, col] : ids) {
        if (symbols.count(id) == 0 && all.count(id) != 0) {
          throw ModelError("input '" + id + "' may not appear in " + field, field, int(i), col);
        }
      }
      programs.push_back(compile_field(*ast, symbols, field, int(i), sources[i]));
      asts.push_back(std::move(ast));
    }
  };
  build(spec_.f, f_symbols, "f", h_symbols, f_ast_, f_);
  build(spec_.g, g_symbols, "g", h_symbols, g_ast_, g_);
  build(spec_.h, h_symbols, "h", h_symbols, h_ast_, h_);
}

double DaeModel::param(std::string_view name) const {
  for (const auto& [n, v] : spec_.params) {
    if (n == name) return v;
  }
  throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
}

Eigen::VectorXd DaeModel::x0() const { return Eigen::Map<const Eigen::VectorXd>(spec_.x0.data(), n_x()); }

std::optional<Eigen::VectorXd> DaeModel::w0_guess() const {
  if (!spec_.w0_guess) return std::nullopt;
  return Eigen::Map<const Eigen::VectorXd>(spec_.w0_guess->data(), n_w());
}

const std::vector<Program>& DaeModel::programs(Block b) const {
  switch (b) {
    case Block::f: return f_;
    case Block::g: return g_;
    case Block::h: return h_;
  }
  throw std::logic_error("bad block");
}

const ExprNode& DaeModel::expr(Block b, int i) const {
  const auto& asts = b == Block::f ? f_ast_ : b == Block::g ? g_ast_ : h_ast_;
  return *asts.at(static_cast<std::size_t>(i));
}

const Program& DaeModel::program(Block b, int i) const { return programs(b).at(static_cast<std::size_t>(i)); }

int DaeModel::nonsmooth_count(Block b) const {
  int n = 0;
  for (const auto& p : programs(b)) n += p.nonsmooth_count();
  return n;
}

std::vector<double> DaeModel::inputs_u(double t) const {
  std::vector<double> out;
  out.reserve(u_.size());
  for (const auto& p : u_) out.push_back(p.evaluate(Frame<double>{.t = t}));
  return out;
}

std::vector<double> DaeModel::inputs_v(double t) const {
  std::vector<double> out;
  out.reserve(v_.size());
  for (const auto& p : v_) out.push_back(p.evaluate(Frame<double>{.t = t}));
  return out;
}

template <class S>
std::vector<S> DaeModel::eval(Block which, double t, std::span<const S> x, std::span<const S> w,
                              const InputOverride* override, std::span<const signed char> forced) const {
  if (x.size() != spec_.diff_states.size() || w.size() != spec_.alg_states.size()) {
    throw std::invalid_argument("state dimension mismatch in model evaluation");
  }
  std::size_t k = 0;
  if constexpr (std::is_same_v<S, LDScalar>) {
    k = !x.empty() ? x[0].k() : (!w.empty() ? w[0].k() : 0);
  }
  const auto lift = [&](const std::vector<double>& values, std::size_t expected, const char* what) {
    if (values.size() != expected) throw std::invalid_argument(std::string("input override size mismatch for ") + what);
    std::vector<S> out;
    out.reserve(values.size());
    for (double v : values) {
      if constexpr (std::is_same_v<S, double>) {
        out.push_back(v);
      } else {
        out.emplace_back(v, k);
      }
    }
    return out;
  };
  std::vector<S> u;
  std::vector<S> v;
  if (which != Block::g) {
    u = lift(override && override->u ? *override->u : inputs_u(t), u_.size(), "u");
  }
  if (which != Block::f) {
    v = lift(override && override->v ? *override->v : inputs_v(t), v_.size(), "v");
  }

  const auto& progs = programs(which);
  if (!forced.empty() && forced.size() != static_cast<std::size_t>(nonsmooth_count(which))) {
    throw std::invalid_argument("forced branch vector has wrong length");
  }
  std::vector<S> out;
  out.reserve(progs.size());
  std::size_t offset = 0;
  for (const auto& p : progs) {
    Frame<S> frame{x, w, u, v, t, k, {}};
    if (!forced.empty()) frame.forced = forced.subspan(offset, static_cast<std::size_t>(p.nonsmooth_count()));
    offset += static_cast<std::size_t>(p.nonsmooth_count());
    out.push_back(p.evaluate(frame));
  }
  return out;
}

template std::vector<double> DaeModel::eval<double>(Block, double, std::span<const double>, std::span<const double>,
                                                    const InputOverride*, std::span<const signed char>) const;
template std::vector<LDScalar> DaeModel::eval<LDScalar>(Block, double, std::span<const LDScalar>,
                                                        std::span<const LDScalar>, const InputOverride*,
                                                        std::span<const signed char>) const;

Eigen::VectorXd eval_values(const DaeModel& model, Block which, double t, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& w, const InputOverride* override) {
  const auto out = model.eval<double>(which, t, std::span<const double>(x.data(), std::size_t(x.size())),
                                      std::span<const double>(w.data(), std::size_t(w.size())), override);
  return Eigen::Map<const Eigen::VectorXd>(out.data(), Eigen::Index(out.size()));
}

LDEval eval_ld(const DaeModel& model, Block which, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& w,
               const Eigen::MatrixXd& X, const Eigen::MatrixXd& W, std::span<const signed char> forced) {
  const Eigen::Index k = X.cols();
  if (X.rows() != x.size() || W.rows() != w.size() || (w.size() > 0 && W.cols() != k)) {
    throw std::invalid_argument("direction matrix shape mismatch in eval_ld");
  }
  std::vector<LDScalar> xs;
  std::vector<LDScalar> ws;
  xs.reserve(std::size_t(x.size()));
  ws.reserve(std::size_t(w.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) xs.push_back(LDScalar::seeded(x(i), X.row(i)));
  for (Eigen::Index i = 0; i < w.size(); ++i) ws.push_back(LDScalar::seeded(w(i), W.row(i)));
  const auto out = model.eval<LDScalar>(which, t, xs, ws, nullptr, forced);
  LDEval result{Eigen::VectorXd(Eigen::Index(out.size())), Eigen::MatrixXd(Eigen::Index(out.size()), k)};
  for (std::size_t i = 0; i < out.size(); ++i) {
    result.value(Eigen::Index(i)) = out[i].value();
    for (Eigen::Index j = 0; j < k; ++j) result.dirs(Eigen::Index(i), j) = out[i].dir(std::size_t(j));
  }
  return result;
}

DaeModel builtin_wind_turbine(WindOutput output) {
  ModelSpec s;
  s.name = output == WindOutput::smooth ? "wind-smooth" : "wind-min";
  s.diff_states = {"V_ref", "E_q"};
  s.alg_states = {"V"};
  s.outputs = {"y"};
  s.params = {{"K_Qi", 0.1}, {"K_Vi", 40.0}, {"R", 0.02},      {"X", 0.02987},
              {"E", 1.0164}, {"X_eq", 0.8},  {"Q_cmd", 0.6484}, {"P", 1.0}};
  // Q = V (E_q - V) / X_eq
  s.f = {"K_Qi * (Q_cmd - V * (E_q - V) / X_eq)", "K_Vi * (V_ref - V)"};
  s.g = {"V^4 - (2 * (P * R + V * (E_q - V) / X_eq * X) + E^2) * V^2 + (R^2 + X^2) * (P^2 + (V * (E_q - V) / X_eq)^2)"};
  s.h = {output == WindOutput::smooth ? "E_q * V" : "min(V, 0.98)"};
  s.x0 = {0.5, 0.75};
  s.w0_guess = std::vector<double>{1.021};
  return DaeModel(std::move(s));
}

DaeModel augment_parameters(const DaeModel& model, std::span<const std::string> names) {
  ModelSpec s = model.spec();
  for (const auto& name : names) {
    auto it = std::find_if(s.params.begin(), s.params.end(), [&](const auto& p) { return p.first == name; });
    if (it == s.params.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    s.diff_states.push_back(it->first);
    s.f.push_back("0");
    s.x0.push_back(it->second);
    s.params.erase(it);
  }
  return DaeModel(std::move(s));
}

}  // namespace daeobs
