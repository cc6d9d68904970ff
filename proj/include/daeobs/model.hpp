#pragma once

// Semi-explicit index-1 DAE models
//
//   x' = f(x, w, u(t))
//   0  = g(x, w, v(t))
//   y  = h(x, w, u(t), v(t))
//
// described by expression strings and compiled once at construction.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "daeobs/errors.hpp"
#include "daeobs/expr.hpp"
#include "daeobs/ld_scalar.hpp"

namespace daeobs {

/// Plain description of a model; field names follow the model document.
struct ModelSpec {
  std::string name;
  std::vector<std::string> diff_states;
  std::vector<std::string> alg_states;
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, double>> params;
  std::vector<std::pair<std::string, std::string>> inputs_u;
  std::vector<std::pair<std::string, std::string>> inputs_v;
  std::vector<std::string> f;
  std::vector<std::string> g;
  std::vector<std::string> h;
  std::vector<double> x0;
  std::optional<std::vector<double>> w0_guess;
};

/// Model definition error tied to a document field. `index` is the entry
/// within list/map fields (-1 for the field as a whole), `expr_column` the
/// 1-based column inside an expression string (0 if not applicable).
class ModelError : public ParseError {
 public:
  ModelError(const std::string& message, std::string field, int index = -1, int expr_column = 0);

  const std::string& field() const { return field_; }
  int index() const { return index_; }
  int expr_column() const { return expr_column_; }

 private:
  std::string field_;
  int index_;
  int expr_column_;
};

enum class Block { f, g, h };

std::string_view block_name(Block b);

/// Replaces the input-signal expressions with fixed values at one call.
struct InputOverride {
  std::optional<std::vector<double>> u;
  std::optional<std::vector<double>> v;
};

/// Values and LD-derivative columns of one expression block.
struct LDEval {
  Eigen::VectorXd value;
  Eigen::MatrixXd dirs;
};

class DaeModel {
 public:
  /// Validates and compiles; throws ModelError.
  explicit DaeModel(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const std::string& name() const { return spec_.name; }

  int n_x() const { return static_cast<int>(spec_.diff_states.size()); }
  int n_w() const { return static_cast<int>(spec_.alg_states.size()); }
  int n_y() const { return static_cast<int>(spec_.h.size()); }

  const std::vector<std::string>& diff_states() const { return spec_.diff_states; }
  const std::vector<std::string>& alg_states() const { return spec_.alg_states; }
  const std::vector<std::string>& outputs() const { return spec_.outputs; }

  /// Throws std::out_of_range for an unknown name.
  double param(std::string_view name) const;

  Eigen::VectorXd x0() const;
  std::optional<Eigen::VectorXd> w0_guess() const;

  const ExprNode& expr(Block b, int i) const;
  const Program& program(Block b, int i) const;

  /// Number of min/max/abs calls across the whole block.
  int nonsmooth_count(Block b) const;
  bool is_smooth(Block b) const { return nonsmooth_count(b) == 0; }

  std::vector<double> inputs_u(double t) const;
  std::vector<double> inputs_v(double t) const;

  /// Evaluates one block over plain reals or LDScalars. Inputs carry zero
  /// directions. `forced` has one entry per nonsmooth call of the block.
  template <class S>
  std::vector<S> eval(Block which, double t, std::span<const S> x, std::span<const S> w,
                      const InputOverride* override = nullptr, std::span<const signed char> forced = {}) const;

 private:
  const std::vector<Program>& programs(Block b) const;

  ModelSpec spec_;
  std::vector<ExprPtr> f_ast_, g_ast_, h_ast_;
  std::vector<Program> f_, g_, h_, u_, v_;
};

extern template std::vector<double> DaeModel::eval<double>(Block, double, std::span<const double>,
                                                           std::span<const double>, const InputOverride*,
                                                           std::span<const signed char>) const;
extern template std::vector<LDScalar> DaeModel::eval<LDScalar>(Block, double, std::span<const LDScalar>,
                                                               std::span<const LDScalar>, const InputOverride*,
                                                               std::span<const signed char>) const;

/// Plain-real evaluation of one block.
Eigen::VectorXd eval_values(const DaeModel& model, Block which, double t, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& w, const InputOverride* override = nullptr);

/// LD evaluation with x seeded by the rows of X (n_x x k) and w by the rows
/// of W (n_w x k).
LDEval eval_ld(const DaeModel& model, Block which, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& w,
               const Eigen::MatrixXd& X, const Eigen::MatrixXd& W, std::span<const signed char> forced = {});

enum class WindOutput { smooth, min_threshold };

/// Wind turbine with reactive power control: states (V_ref, E_q), algebraic
/// terminal voltage V, injected reactive power Q = V (E_q - V) / X_eq
/// substituted into f and g. Output E_q * V or min(V, 0.98).
DaeModel builtin_wind_turbine(WindOutput output);

/// Turns the named parameters into differential states with zero dynamics
/// and initial value equal to the parameter value.
DaeModel augment_parameters(const DaeModel& model, std::span<const std::string> names);

// Model documents (YAML; JSON is accepted as a subset).
DaeModel parse_model(std::string_view text);
DaeModel load_model(const std::string& path);
std::string serialize_model(const DaeModel& model);

// ---------------------------------------------------------------------------
// Algebraic solves

struct NewtonOptions {
  double tol = 1e-10;       // infinity norm of g
  int max_iter = 50;
  double max_condition = 1e12;
};

/// ||g(x, w, v(t))||_inf.
double algebraic_residual(const DaeModel& model, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& w);

/// Damped (semismooth) Newton on g(x0, ., v(t0)) = 0 from `w_guess`. The
/// Newton matrix is the lexicographic derivative with respect to w, a
/// Clarke generalized Jacobian element when g is nonsmooth.
/// Throws ConvergenceError or RegularityError.
Eigen::VectorXd consistent_init(const DaeModel& model, double t0, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& w_guess, const NewtonOptions& options = {});

}  // namespace daeobs
