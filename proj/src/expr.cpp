#include "daeobs/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <type_traits>

#include "daeobs/errors.hpp"

namespace daeobs {

namespace {

struct FunctionInfo {
  Function function;
  std::string_view name;
  int arity;
  bool nonsmooth;
};

constexpr std::array<FunctionInfo, 8> kFunctions{{
    {Function::min, "min", 2, true},
    {Function::max, "max", 2, true},
    {Function::abs, "abs", 1, true},
    {Function::exp, "exp", 1, false},
    {Function::log, "log", 1, false},
    {Function::sqrt, "sqrt", 1, false},
    {Function::sin, "sin", 1, false},
    {Function::cos, "cos", 1, false},
}};

const FunctionInfo& info(Function f) {
  for (const auto& fi : kFunctions) {
    if (fi.function == f) return fi;
  }
  throw std::logic_error("unknown function");
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  ExprPtr parse() {
    skip_space();
    if (at_end()) fail("empty expression");
    ExprPtr e = expr();
    skip_space();
    if (!at_end()) fail(std::string("unexpected character '") + text_[pos_] + "'");
    return e;
  }

 private:
  using Kind = ExprNode::Kind;

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(message, 1, static_cast<int>(pos_) + 1);
  }

  bool at_end() const { return pos_ >= text_.size(); }
  int column() const { return static_cast<int>(pos_) + 1; }

  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (!at_end() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (at_end()) fail(std::string("expected '") + c + "' before end of expression");
      fail(std::string("expected '") + c + "'");
    }
  }

  ExprPtr expr() {
    ExprPtr lhs = term();
    for (;;) {
      skip_space();
      const int col = column();
      if (accept('+')) {
        lhs = ExprNode::binary(Kind::add, lhs, term(), col);
      } else if (accept('-')) {
        lhs = ExprNode::binary(Kind::sub, lhs, term(), col);
      } else {
        return lhs;
      }
    }
  }

  ExprPtr term() {
    ExprPtr lhs = unary();
    for (;;) {
      skip_space();
      const int col = column();
      if (accept('*')) {
        lhs = ExprNode::binary(Kind::mul, lhs, unary(), col);
      } else if (accept('/')) {
        lhs = ExprNode::binary(Kind::div, lhs, unary(), col);
      } else {
        return lhs;
      }
    }
  }

  ExprPtr unary() {
    skip_space();
    const int col = column();
    if (accept('-')) return ExprNode::unary(unary(), col);
    return power();
  }

  ExprPtr power() {
    ExprPtr base = atom();
    skip_space();
    const int col = column();
    if (accept('^')) return ExprNode::binary(Kind::pow, base, unary(), col);
    return base;
  }

  ExprPtr atom() {
    skip_space();
    if (at_end()) fail("unexpected end of expression");
    const char c = text_[pos_];
    const int col = column();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string name = identifier();
      skip_space();
      if (!at_end() && text_[pos_] == '(') return call(name, col);
      return ExprNode::identifier(std::move(name), col);
    }
    if (accept('(')) {
      ExprPtr inner = expr();
      expect(')');
      return inner;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  ExprPtr number() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) ++pos_;
    if (!at_end() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        pos_ = p;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double value = 0.0;
    const char* first = text_.data() + start;
    const char* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
      pos_ = start;
      fail("malformed number '" + std::string(first, last) + "'");
    }
    return ExprNode::literal(value, static_cast<int>(start) + 1);
  }

  std::string identifier() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  ExprPtr call(const std::string& name, int col) {
    const FunctionInfo* fi = nullptr;
    for (const auto& f : kFunctions) {
      if (f.name == name) fi = &f;
    }
    if (fi == nullptr) {
      pos_ = static_cast<std::size_t>(col - 1);
      fail("unknown function '" + name + "'");
    }
    expect('(');
    std::vector<ExprPtr> args;
    skip_space();
    if (!accept(')')) {
      do {
        args.push_back(expr());
      } while (accept(','));
      expect(')');
    }
    if (static_cast<int>(args.size()) != fi->arity) {
      pos_ = static_cast<std::size_t>(col - 1);
      fail("function '" + name + "' expects " + std::to_string(fi->arity) + " argument(s), got " +
           std::to_string(args.size()));
    }
    return ExprNode::call(fi->function, std::move(args), col);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// Printer precedence; higher binds tighter.
int precedence(const ExprNode& n) {
  switch (n.kind) {
    case ExprNode::Kind::add:
    case ExprNode::Kind::sub:
      return 1;
    case ExprNode::Kind::mul:
    case ExprNode::Kind::div:
      return 2;
    case ExprNode::Kind::negate:
      return 3;
    case ExprNode::Kind::pow:
      return 4;
    default:
      return 5;
  }
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf.data(), ptr);
}

void format_into(const ExprNode& n, std::string& out);

void format_child(const ExprNode& child, bool parens, std::string& out) {
  if (parens) out += '(';
  format_into(child, out);
  if (parens) out += ')';
}

void format_into(const ExprNode& n, std::string& out) {
  using Kind = ExprNode::Kind;
  switch (n.kind) {
    case Kind::literal:
      if (n.number < 0.0 || std::signbit(n.number)) {
        out += "(" + format_number(n.number) + ")";
      } else {
        out += format_number(n.number);
      }
      return;
    case Kind::identifier:
      out += n.name;
      return;
    case Kind::negate:
      out += '-';
      format_child(*n.args[0], precedence(*n.args[0]) < 3, out);
      return;
    case Kind::pow:
      format_child(*n.args[0], precedence(*n.args[0]) <= 4, out);
      out += '^';
      format_child(*n.args[1], precedence(*n.args[1]) < 3, out);
      return;
    case Kind::call:
      out += function_name(n.function);
      out += '(';
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i > 0) out += ", ";
        format_into(*n.args[i], out);
      }
      out += ')';
      return;
    default: {
      const int p = precedence(n);
      const char* op = n.kind == Kind::add ? " + " : n.kind == Kind::sub ? " - " : n.kind == Kind::mul ? " * " : " / ";
      format_child(*n.args[0], precedence(*n.args[0]) < p, out);
      out += op;
      format_child(*n.args[1], precedence(*n.args[1]) <= p, out);
      return;
    }
  }
}

void compile_into(const ExprNode& n, const SymbolTable& symbols, std::vector<Program::Instr>& code, int& nonsmooth) {
  using Kind = ExprNode::Kind;
  using Op = Program::Op;
  switch (n.kind) {
    case Kind::literal:
      code.push_back({Op::constant, 0, n.number, n.column});
      return;
    case Kind::identifier: {
      auto it = symbols.find(n.name);
      if (it == symbols.end()) throw ParseError("unknown identifier '" + n.name + "'", 1, n.column);
      const Symbol& s = it->second;
      switch (s.kind) {
        case Symbol::Kind::constant:
          code.push_back({Op::constant, 0, s.value, n.column});
          break;
        case Symbol::Kind::x:
          code.push_back({Op::load_x, s.index, 0.0, n.column});
          break;
        case Symbol::Kind::w:
          code.push_back({Op::load_w, s.index, 0.0, n.column});
          break;
        case Symbol::Kind::u:
          code.push_back({Op::load_u, s.index, 0.0, n.column});
          break;
        case Symbol::Kind::v:
          code.push_back({Op::load_v, s.index, 0.0, n.column});
          break;
        case Symbol::Kind::time:
          code.push_back({Op::load_t, 0, 0.0, n.column});
          break;
      }
      return;
    }
    default:
      break;
  }
  for (const auto& a : n.args) compile_into(*a, symbols, code, nonsmooth);
  Op op{};
  switch (n.kind) {
    case Kind::negate: op = Op::negate; break;
    case Kind::add: op = Op::add; break;
    case Kind::sub: op = Op::sub; break;
    case Kind::mul: op = Op::mul; break;
    case Kind::div: op = Op::div; break;
    case Kind::pow: op = Op::pow; break;
    case Kind::call:
      switch (n.function) {
        case Function::min: op = Op::min; break;
        case Function::max: op = Op::max; break;
        case Function::abs: op = Op::abs; break;
        case Function::exp: op = Op::exp; break;
        case Function::log: op = Op::log; break;
        case Function::sqrt: op = Op::sqrt; break;
        case Function::sin: op = Op::sin; break;
        case Function::cos: op = Op::cos; break;
      }
      break;
    default:
      throw std::logic_error("unreachable expression kind");
  }
  int index = 0;
  if (op == Op::min || op == Op::max || op == Op::abs) index = nonsmooth++;
  code.push_back({op, index, 0.0, n.column});
}

// Scalar-kind dispatch for the evaluator.
template <class S>
S make_constant(double v, std::size_t k) {
  if constexpr (std::is_same_v<S, double>) {
    (void)k;
    return v;
  } else {
    return LDScalar(v, k);
  }
}

template <class S>
S lift(const S& s) {
  return s;
}

inline double s_min(double a, double b) { return a <= b ? a : b; }
inline double s_max(double a, double b) { return a >= b ? a : b; }
inline double s_abs(double a) { return std::fabs(a); }
inline double s_exp(double a) { return std::exp(a); }
inline double s_log(double a) { return checked_log(a); }
inline double s_sqrt(double a) { return checked_sqrt(a); }
inline double s_sin(double a) { return std::sin(a); }
inline double s_cos(double a) { return std::cos(a); }
inline double s_div(double a, double b) { return checked_div(a, b); }
inline double s_pow(double a, double b) { return checked_pow(a, b); }

inline LDScalar s_min(const LDScalar& a, const LDScalar& b) { return ld_min(a, b); }
inline LDScalar s_max(const LDScalar& a, const LDScalar& b) { return ld_max(a, b); }
inline LDScalar s_abs(const LDScalar& a) { return ld_abs(a); }
inline LDScalar s_exp(const LDScalar& a) { return ld_exp(a); }
inline LDScalar s_log(const LDScalar& a) { return ld_log(a); }
inline LDScalar s_sqrt(const LDScalar& a) { return ld_sqrt(a); }
inline LDScalar s_sin(const LDScalar& a) { return ld_sin(a); }
inline LDScalar s_cos(const LDScalar& a) { return ld_cos(a); }
inline LDScalar s_div(const LDScalar& a, const LDScalar& b) { return a / b; }
inline LDScalar s_pow(const LDScalar& a, const LDScalar& b) { return ld_pow(a, b); }

// A forced branch keeps the true nonsmooth value but takes the derivative
// information of the requested operand.
inline double forced_pick(double natural, const double&, const double&, int) { return natural; }

inline LDScalar forced_pick(const LDScalar& natural, const LDScalar& a, const LDScalar& b, int choice) {
  const LDScalar& src = choice == 0 ? a : b;
  return LDScalar(natural.value(), std::vector<double>(src.dirs().begin(), src.dirs().end()));
}

}  // namespace

std::string_view function_name(Function f) { return info(f).name; }
int function_arity(Function f) { return info(f).arity; }
bool is_nonsmooth(Function f) { return info(f).nonsmooth; }

ExprPtr ExprNode::literal(double v, int column) {
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::literal;
  n->number = v;
  n->column = column;
  return n;
}

ExprPtr ExprNode::identifier(std::string name, int column) {
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::identifier;
  n->name = std::move(name);
  n->column = column;
  return n;
}

ExprPtr ExprNode::unary(ExprPtr operand, int column) {
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::negate;
  n->args = {std::move(operand)};
  n->column = column;
  return n;
}

ExprPtr ExprNode::binary(Kind kind, ExprPtr lhs, ExprPtr rhs, int column) {
  auto n = std::make_shared<ExprNode>();
  n->kind = kind;
  n->args = {std::move(lhs), std::move(rhs)};
  n->column = column;
  return n;
}

ExprPtr ExprNode::call(Function f, std::vector<ExprPtr> args, int column) {
  if (static_cast<int>(args.size()) != function_arity(f)) throw std::invalid_argument("arity mismatch");
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::call;
  n->function = f;
  n->args = std::move(args);
  n->column = column;
  return n;
}

ExprPtr parse_expression(std::string_view text) { return Parser(text).parse(); }

std::string format_expression(const ExprNode& node) {
  std::string out;
  format_into(node, out);
  return out;
}

bool structurally_equal(const ExprNode& a, const ExprNode& b) {
  if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
  switch (a.kind) {
    case ExprNode::Kind::literal:
      return a.number == b.number;
    case ExprNode::Kind::identifier:
      return a.name == b.name;
    case ExprNode::Kind::call:
      if (a.function != b.function) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!structurally_equal(*a.args[i], *b.args[i])) return false;
  }
  return true;
}

void collect_identifiers(const ExprNode& node, std::vector<std::pair<std::string, int>>& out) {
  if (node.kind == ExprNode::Kind::identifier) out.emplace_back(node.name, node.column);
  for (const auto& a : node.args) collect_identifiers(*a, out);
}

int count_nonsmooth(const ExprNode& node) {
  int n = node.kind == ExprNode::Kind::call && is_nonsmooth(node.function) ? 1 : 0;
  for (const auto& a : node.args) n += count_nonsmooth(*a);
  return n;
}

Program Program::compile(const ExprNode& root, const SymbolTable& symbols, std::string label, std::string source) {
  Program p;
  compile_into(root, symbols, p.code_, p.nonsmooth_);
  p.label_ = std::move(label);
  p.source_ = std::move(source);
  std::size_t depth = 0;
  for (const auto& ins : p.code_) {
    switch (ins.op) {
      case Op::constant:
      case Op::load_x:
      case Op::load_w:
      case Op::load_u:
      case Op::load_v:
      case Op::load_t:
        ++depth;
        break;
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div:
      case Op::pow:
      case Op::min:
      case Op::max:
        --depth;
        break;
      default:
        break;
    }
    p.max_depth_ = std::max(p.max_depth_, depth);
  }
  return p;
}

bool Program::uses(Symbol::Kind kind) const {
  for (const auto& ins : code_) {
    switch (kind) {
      case Symbol::Kind::x:
        if (ins.op == Op::load_x) return true;
        break;
      case Symbol::Kind::w:
        if (ins.op == Op::load_w) return true;
        break;
      case Symbol::Kind::u:
        if (ins.op == Op::load_u) return true;
        break;
      case Symbol::Kind::v:
        if (ins.op == Op::load_v) return true;
        break;
      case Symbol::Kind::time:
        if (ins.op == Op::load_t) return true;
        break;
      case Symbol::Kind::constant:
        if (ins.op == Op::constant) return true;
        break;
    }
  }
  return false;
}

template <class S>
S Program::evaluate(const Frame<S>& frame) const {
  std::vector<S> stack;
  stack.reserve(max_depth_);
  std::size_t pc = 0;
  const auto forced = [&](int index) -> int {
    return static_cast<std::size_t>(index) < frame.forced.size() ? frame.forced[static_cast<std::size_t>(index)] : -1;
  };
  try {
    for (; pc < code_.size(); ++pc) {
      const Instr& ins = code_[pc];
      switch (ins.op) {
        case Op::constant:
          stack.push_back(make_constant<S>(ins.number, frame.k));
          continue;
        case Op::load_x:
          stack.push_back(frame.x[static_cast<std::size_t>(ins.index)]);
          continue;
        case Op::load_w:
          stack.push_back(frame.w[static_cast<std::size_t>(ins.index)]);
          continue;
        case Op::load_u:
          stack.push_back(frame.u[static_cast<std::size_t>(ins.index)]);
          continue;
        case Op::load_v:
          stack.push_back(frame.v[static_cast<std::size_t>(ins.index)]);
          continue;
        case Op::load_t:
          stack.push_back(make_constant<S>(frame.t, frame.k));
          continue;
        default:
          break;
      }
      S& top = stack.back();
      switch (ins.op) {
        case Op::negate: top = -top; continue;
        case Op::exp: top = s_exp(top); continue;
        case Op::log: top = s_log(top); continue;
        case Op::sqrt: top = s_sqrt(top); continue;
        case Op::sin: top = s_sin(top); continue;
        case Op::cos: top = s_cos(top); continue;
        case Op::abs: {
          const int choice = forced(ins.index);
          if (choice < 0) {
            top = s_abs(top);
          } else {
            const S neg = -top;
            top = forced_pick(s_abs(top), top, neg, choice);
          }
          continue;
        }
        default:
          break;
      }
      S rhs = std::move(stack.back());
      stack.pop_back();
      S& lhs = stack.back();
      switch (ins.op) {
        case Op::add: lhs = lhs + rhs; break;
        case Op::sub: lhs = lhs - rhs; break;
        case Op::mul: lhs = lhs * rhs; break;
        case Op::div: lhs = s_div(lhs, rhs); break;
        case Op::pow: lhs = s_pow(lhs, rhs); break;
        case Op::min:
        case Op::max: {
          const int choice = forced(ins.index);
          S natural = ins.op == Op::min ? s_min(lhs, rhs) : s_max(lhs, rhs);
          lhs = choice < 0 ? std::move(natural) : forced_pick(natural, lhs, rhs, choice);
          break;
        }
        default:
          throw std::logic_error("bad opcode");
      }
    }
  } catch (const DomainError& e) {
    const int col = pc < code_.size() ? code_[pc].column : 0;
    throw DomainError(label_ + ", column " + std::to_string(col) + " of '" + source_ + "': " + e.what());
  }
  return std::move(stack.back());
}

template double Program::evaluate<double>(const Frame<double>&) const;
template LDScalar Program::evaluate<LDScalar>(const Frame<LDScalar>&) const;

}  // namespace daeobs
