#pragma once

// Expression trees for model right-hand sides, a recursive-descent parser,
// a printer whose output re-parses to the same tree, and a flat compiled
// form that evaluates over plain reals or LDScalars.

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "daeobs/ld_scalar.hpp"

namespace daeobs {

enum class Function { min, max, abs, exp, log, sqrt, sin, cos };

std::string_view function_name(Function f);
int function_arity(Function f);
bool is_nonsmooth(Function f);

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  enum class Kind { literal, identifier, negate, add, sub, mul, div, pow, call };

  Kind kind = Kind::literal;
  double number = 0.0;    // literal
  std::string name;       // identifier
  Function function{};    // call
  std::vector<ExprPtr> args;
  int column = 0;         // 1-based position in the source string

  static ExprPtr literal(double v, int column = 0);
  static ExprPtr identifier(std::string name, int column = 0);
  static ExprPtr unary(ExprPtr operand, int column = 0);
  static ExprPtr binary(Kind kind, ExprPtr lhs, ExprPtr rhs, int column = 0);
  static ExprPtr call(Function f, std::vector<ExprPtr> args, int column = 0);
};

/// Grammar (lowest to highest precedence):
///   expr  := term (('+' | '-') term)*
///   term  := unary (('*' | '/') unary)*
///   unary := '-' unary | power
///   power := atom ('^' unary)?
///   atom  := number | identifier | function '(' expr (',' expr)* ')' | '(' expr ')'
/// Throws ParseError with line 1 and the offending column.
ExprPtr parse_expression(std::string_view text);

std::string format_expression(const ExprNode& node);

bool structurally_equal(const ExprNode& a, const ExprNode& b);

/// Every identifier occurrence with its column.
void collect_identifiers(const ExprNode& node, std::vector<std::pair<std::string, int>>& out);

int count_nonsmooth(const ExprNode& node);

// ---------------------------------------------------------------------------
// Compiled form

struct Symbol {
  enum class Kind { constant, x, w, u, v, time };
  Kind kind = Kind::constant;
  int index = 0;
  double value = 0.0;
};

using SymbolTable = std::map<std::string, Symbol, std::less<>>;

/// Evaluation inputs. All LDScalars must carry `k` directions.
template <class S>
struct Frame {
  std::span<const S> x;
  std::span<const S> w;
  std::span<const S> u;
  std::span<const S> v;
  double t = 0.0;
  std::size_t k = 0;
  /// One entry per nonsmooth call in program order: -1 free, 0 take the
  /// first operand, 1 the second (abs: 0 -> a, 1 -> -a). Empty = all free.
  std::span<const signed char> forced;
};

class Program {
 public:
  Program() = default;

  /// Resolves identifiers through `symbols`; unknown names throw ParseError
  /// carrying the identifier's column.
  static Program compile(const ExprNode& root, const SymbolTable& symbols, std::string label, std::string source);

  template <class S>
  S evaluate(const Frame<S>& frame) const;

  int nonsmooth_count() const { return nonsmooth_; }
  const std::string& label() const { return label_; }
  const std::string& source() const { return source_; }

  /// True when the program reads the given kind of slot.
  bool uses(Symbol::Kind kind) const;

  enum class Op : unsigned char {
    constant, load_x, load_w, load_u, load_v, load_t,
    negate, add, sub, mul, div, pow,
    min, max, abs, exp, log, sqrt, sin, cos
  };

  struct Instr {
    Op op;
    int index;
    double number;
    int column;
  };

 private:
  std::vector<Instr> code_;
  int nonsmooth_ = 0;
  std::size_t max_depth_ = 0;
  std::string label_;
  std::string source_;
};

extern template double Program::evaluate<double>(const Frame<double>&) const;
extern template LDScalar Program::evaluate<LDScalar>(const Frame<LDScalar>&) const;

}  // namespace daeobs
