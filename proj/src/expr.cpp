#include "vlyap/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace vlyap {

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;
using Kind = Expr::Kind;
using Func = Expr::Func;

NodePtr make_node(Expr::Node n) { return std::make_shared<const Expr::Node>(std::move(n)); }

const char* func_name(Func f) {
  switch (f) {
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    case Func::Exp: return "exp";
    case Func::Tanh: return "tanh";
    case Func::Sqrt: return "sqrt";
  }
  return "?";
}

}  // namespace

Expr Expr::constant(double v) {
  return Expr(make_node({.kind = Kind::Constant, .value = v}), 0);
}

Expr Expr::variable(int index, int arity) {
  if (index < 0 || index >= arity) throw std::invalid_argument("variable index out of range");
  return Expr(make_node({.kind = Kind::Variable, .index = index}), arity);
}

// Smart constructors fold constants so derivative trees stay compact. The
// parser goes through the same constructors, which keeps print -> parse
// round trips structurally stable.
Expr operator+(const Expr& a, const Expr& b) {
  const int arity = std::max(a.arity(), b.arity());
  if (a.node().kind == Kind::Constant && b.node().kind == Kind::Constant)
    return Expr::constant(a.node().value + b.node().value);
  if (a.is_constant(0.0)) return Expr(b.node_ ? b.node_ : nullptr, arity);
  if (b.is_constant(0.0)) return Expr(a.node_, arity);
  return Expr(make_node({.kind = Kind::Sum, .a = a.node_, .b = b.node_}), arity);
}

Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }

Expr operator*(const Expr& a, const Expr& b) {
  const int arity = std::max(a.arity(), b.arity());
  if (a.node().kind == Kind::Constant && b.node().kind == Kind::Constant)
    return Expr::constant(a.node().value * b.node().value);
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::constant(0.0);
  if (a.is_constant(1.0)) return Expr(b.node_, arity);
  if (b.is_constant(1.0)) return Expr(a.node_, arity);
  return Expr(make_node({.kind = Kind::Product, .a = a.node_, .b = b.node_}), arity);
}

Expr operator/(const Expr& a, const Expr& b) {
  const int arity = std::max(a.arity(), b.arity());
  if (b.is_constant(1.0)) return Expr(a.node_, arity);
  if (a.is_constant(0.0) && !b.is_constant(0.0)) return Expr::constant(0.0);
  return Expr(make_node({.kind = Kind::Quotient, .a = a.node_, .b = b.node_}), arity);
}

Expr operator-(const Expr& a) {
  if (a.node().kind == Kind::Constant) return Expr::constant(-a.node().value);
  if (a.node().kind == Kind::Negate) return Expr(a.node().a, a.arity());
  return Expr(make_node({.kind = Kind::Negate, .a = a.node_}), a.arity());
}

Expr pow(const Expr& a, int exponent) {
  if (exponent < 0) throw std::invalid_argument("negative exponent");
  if (exponent == 0) return Expr::constant(1.0);
  if (exponent == 1) return a;
  if (a.node().kind == Kind::Constant) return Expr::constant(detail::ipow(a.node().value, exponent));
  return Expr(make_node({.kind = Kind::Power, .exponent = exponent, .a = a.node_}), a.arity());
}

Expr apply(Func f, const Expr& a) {
  return Expr(make_node({.kind = Kind::Call, .func = f, .a = a.node_}), a.arity());
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct Token {
  enum class Type { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };
  Type type = Type::End;
  double number = 0.0;
  bool number_is_integer = false;
  std::string text;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  Token next() {
    skip_ws();
    Token t;
    t.line = line_;
    t.column = column_;
    if (pos_ >= src_.size()) {
      t.type = Token::Type::End;
      return t;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return lex_number(t);
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return lex_ident(t);
    advance();
    switch (c) {
      case '+': t.type = Token::Type::Plus; return t;
      case '-': t.type = Token::Type::Minus; return t;
      case '*': t.type = Token::Type::Star; return t;
      case '/': t.type = Token::Type::Slash; return t;
      case '^': t.type = Token::Type::Caret; return t;
      case '(': t.type = Token::Type::LParen; return t;
      case ')': t.type = Token::Type::RParen; return t;
      default:
        throw ParseError(std::string("unexpected character '") + c + "'", t.line, t.column);
    }
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
  }

  Token lex_number(Token t) {
    const size_t start = pos_;
    bool integral = true;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      integral = false;
      advance();
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      integral = false;
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
      if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_])))
        throw ParseError("malformed exponent", t.line, t.column);
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    }
    const std::string text = src_.substr(start, pos_ - start);
    if (text == ".") throw ParseError("malformed number", t.line, t.column);
    t.type = Token::Type::Number;
    t.number = std::strtod(text.c_str(), nullptr);
    t.number_is_integer = integral;
    t.text = text;
    return t;
  }

  Token lex_ident(Token t) {
    const size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      advance();
    t.type = Token::Type::Ident;
    t.text = src_.substr(start, pos_ - start);
    return t;
  }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

// Grammar (precedence low to high):
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' nonneg-integer)?
//   atom   := number | variable | func '(' expr ')' | '(' expr ')'
class Parser {
 public:
  Parser(const std::string& src, const std::vector<std::string>& variables)
      : lexer_(src), variables_(variables) {
    cur_ = lexer_.next();
  }

  Expr parse() {
    Expr e = parse_expr();
    expect(Token::Type::End, "trailing input");
    return e;
  }

 private:
  void bump() { cur_ = lexer_.next(); }

  void expect(Token::Type t, const char* what) {
    if (cur_.type != t) throw ParseError(std::string("syntax error: ") + what, cur_.line, cur_.column);
    if (t != Token::Type::End) bump();
  }

  Expr parse_expr() {
    Expr e = parse_term();
    while (cur_.type == Token::Type::Plus || cur_.type == Token::Type::Minus) {
      const bool minus = cur_.type == Token::Type::Minus;
      bump();
      Expr rhs = parse_term();
      e = minus ? e - rhs : e + rhs;
    }
    return e;
  }

  Expr parse_term() {
    Expr e = parse_unary();
    while (cur_.type == Token::Type::Star || cur_.type == Token::Type::Slash) {
      const bool div = cur_.type == Token::Type::Slash;
      bump();
      Expr rhs = parse_unary();
      e = div ? e / rhs : e * rhs;
    }
    return e;
  }

  Expr parse_unary() {
    if (cur_.type == Token::Type::Minus) {
      bump();
      return -parse_unary();
    }
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (cur_.type != Token::Type::Caret) return base;
    const Token caret = cur_;
    bump();
    if (cur_.type != Token::Type::Number)
      throw ParseError("exponent must be a nonnegative integer literal", caret.line, caret.column);
    if (!cur_.number_is_integer || cur_.number < 0.0)
      throw ParseError("exponent must be a nonnegative integer", cur_.line, cur_.column);
    const int exponent = static_cast<int>(cur_.number);
    bump();
    return pow(base, exponent);
  }

  Expr parse_atom() {
    switch (cur_.type) {
      case Token::Type::Number: {
        Expr e = Expr::constant(cur_.number);
        bump();
        return e;
      }
      case Token::Type::LParen: {
        bump();
        Expr e = parse_expr();
        expect(Token::Type::RParen, "expected ')'");
        return e;
      }
      case Token::Type::Ident: {
        const Token id = cur_;
        bump();
        if (cur_.type == Token::Type::LParen) {
          bump();
          Expr arg = parse_expr();
          expect(Token::Type::RParen, "expected ')'");
          if (id.text == "sin") return sin(arg);
          if (id.text == "cos") return cos(arg);
          if (id.text == "exp") return exp(arg);
          if (id.text == "tanh") return tanh(arg);
          if (id.text == "sqrt") return sqrt(arg);
          throw ParseError("unknown function '" + id.text + "'", id.line, id.column);
        }
        for (size_t i = 0; i < variables_.size(); ++i)
          if (variables_[i] == id.text)
            return Expr::variable(static_cast<int>(i), static_cast<int>(variables_.size()));
        throw ParseError("unknown identifier '" + id.text + "'", id.line, id.column);
      }
      default:
        throw ParseError("syntax error: expected a value", cur_.line, cur_.column);
    }
  }

  Lexer lexer_;
  const std::vector<std::string>& variables_;
  Token cur_;
};

}  // namespace

Expr parse_expression(const std::string& source, const std::vector<std::string>& variables) {
  Parser p(source, variables);
  return p.parse();
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double eval_node(const Expr::Node& n, const Eigen::VectorXd& x) {
  switch (n.kind) {
    case Kind::Constant: return n.value;
    case Kind::Variable:
      if (n.index >= x.size()) throw EvalError("point dimension below expression arity");
      return x[n.index];
    case Kind::Sum: return eval_node(*n.a, x) + eval_node(*n.b, x);
    case Kind::Product: return eval_node(*n.a, x) * eval_node(*n.b, x);
    case Kind::Quotient: {
      const double d = eval_node(*n.b, x);
      if (d == 0.0) throw EvalError("division by zero");
      return eval_node(*n.a, x) / d;
    }
    case Kind::Negate: return -eval_node(*n.a, x);
    case Kind::Power: return detail::ipow(eval_node(*n.a, x), n.exponent);
    case Kind::Call: {
      const double v = eval_node(*n.a, x);
      switch (n.func) {
        case Func::Sin: return std::sin(v);
        case Func::Cos: return std::cos(v);
        case Func::Exp: return std::exp(v);
        case Func::Tanh: return std::tanh(v);
        case Func::Sqrt:
          if (v < 0.0) throw EvalError("sqrt of negative value");
          return std::sqrt(v);
      }
    }
  }
  throw EvalError("corrupt expression node");
}

}  // namespace

double eval(const Expr& e, const Eigen::VectorXd& point) {
  if (point.size() < e.arity()) throw EvalError("point dimension below expression arity");
  return eval_node(e.node(), point);
}

// ---------------------------------------------------------------------------
// Differentiation

// Access shim: rebuilds Expr handles around shared child nodes.
class ExprBuilder {
 public:
  static Expr make(std::shared_ptr<const Expr::Node> n, int arity) { return Expr(std::move(n), arity); }
};

namespace {

Expr diff_node(const Expr& e, int var) {
  const Expr::Node& n = e.node();
  const int arity = e.arity();
  auto child_a = [&] { return ExprBuilder::make(n.a, arity); };
  auto child_b = [&] { return ExprBuilder::make(n.b, arity); };
  switch (n.kind) {
    case Kind::Constant: return Expr::constant(0.0);
    case Kind::Variable: return Expr::constant(n.index == var ? 1.0 : 0.0);
    case Kind::Sum: return differentiate(child_a(), var) + differentiate(child_b(), var);
    case Kind::Product: {
      Expr a = child_a(), b = child_b();
      return differentiate(a, var) * b + a * differentiate(b, var);
    }
    case Kind::Quotient: {
      Expr a = child_a(), b = child_b();
      return (differentiate(a, var) * b - a * differentiate(b, var)) / pow(b, 2);
    }
    case Kind::Negate: return -differentiate(child_a(), var);
    case Kind::Power: {
      Expr a = child_a();
      return Expr::constant(n.exponent) * pow(a, n.exponent - 1) * differentiate(a, var);
    }
    case Kind::Call: {
      Expr a = child_a();
      Expr da = differentiate(a, var);
      switch (n.func) {
        case Func::Sin: return cos(a) * da;
        case Func::Cos: return -(sin(a) * da);
        case Func::Exp: return exp(a) * da;
        case Func::Tanh: return (Expr::constant(1.0) - pow(tanh(a), 2)) * da;
        case Func::Sqrt: return da / (Expr::constant(2.0) * sqrt(a));
      }
    }
  }
  throw std::logic_error("corrupt expression node");
}

}  // namespace

Expr differentiate(const Expr& e, int var) { return diff_node(e, var); }

std::vector<std::vector<Expr>> jacobian(const std::vector<Expr>& f) {
  int arity = 0;
  for (const auto& e : f) arity = std::max(arity, e.arity());
  std::vector<std::vector<Expr>> rows;
  rows.reserve(f.size());
  for (const auto& e : f) {
    std::vector<Expr> row;
    row.reserve(static_cast<size_t>(arity));
    for (int j = 0; j < arity; ++j) row.push_back(differentiate(e, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Interval evaluation

namespace {

std::optional<Interval> ieval(const Expr::Node& n, const Box& box) {
  switch (n.kind) {
    case Kind::Constant: return Interval::point(n.value);
    case Kind::Variable:
      if (n.index >= box.dim()) return std::nullopt;
      return box[n.index];
    case Kind::Sum: {
      auto a = ieval(*n.a, box), b = ieval(*n.b, box);
      if (!a || !b) return std::nullopt;
      return *a + *b;
    }
    case Kind::Product: {
      auto a = ieval(*n.a, box), b = ieval(*n.b, box);
      if (!a || !b) return std::nullopt;
      return *a * *b;
    }
    case Kind::Quotient: {
      auto a = ieval(*n.a, box), b = ieval(*n.b, box);
      if (!a || !b) return std::nullopt;
      return interval_div(*a, *b);
    }
    case Kind::Negate: {
      auto a = ieval(*n.a, box);
      if (!a) return std::nullopt;
      return -*a;
    }
    case Kind::Power: {
      auto a = ieval(*n.a, box);
      if (!a) return std::nullopt;
      return interval_pow(*a, n.exponent);
    }
    case Kind::Call: {
      auto a = ieval(*n.a, box);
      if (!a) return std::nullopt;
      switch (n.func) {
        case Func::Sin: return interval_sin(*a);
        case Func::Cos: return interval_cos(*a);
        case Func::Exp: return interval_exp(*a);
        case Func::Tanh: return interval_tanh(*a);
        case Func::Sqrt: return interval_sqrt(*a);
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<Interval> interval_eval(const Expr& e, const Box& box) {
  if (box.dim() < e.arity()) return std::nullopt;
  return ieval(e.node(), box);
}

// ---------------------------------------------------------------------------
// Printing

namespace {

// Precedence levels for parenthesization: sum < product < unary < power < atom.
enum Prec { kSum = 0, kProduct = 1, kUnary = 2, kPower = 3, kAtom = 4 };

int precedence(const Expr::Node& n) {
  switch (n.kind) {
    case Kind::Sum: return kSum;
    case Kind::Product:
    case Kind::Quotient: return kProduct;
    case Kind::Negate: return kUnary;
    case Kind::Power: return kPower;
    default: return kAtom;
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  std::string s(buf);
  // Keep "inf"/"nan" out of printed trees; they never parse back.
  return s;
}

void print_node(const Expr::Node& n, const std::vector<std::string>& vars, int parent_prec,
                std::string& out) {
  const int prec = precedence(n);
  const bool parens = prec < parent_prec;
  if (parens) out += '(';
  switch (n.kind) {
    case Kind::Constant:
      out += format_double(n.value);
      break;
    case Kind::Variable:
      if (n.index < static_cast<int>(vars.size()))
        out += vars[static_cast<size_t>(n.index)];
      else
        out += "x" + std::to_string(n.index);
      break;
    case Kind::Sum: {
      print_node(*n.a, vars, kSum, out);
      // Render a + (-b) and a + negative-constant as subtraction.
      if (n.b->kind == Kind::Negate) {
        out += " - ";
        print_node(*n.b->a, vars, kProduct, out);
      } else if (n.b->kind == Kind::Constant && n.b->value < 0.0) {
        out += " - ";
        out += format_double(-n.b->value);
      } else {
        out += " + ";
        print_node(*n.b, vars, kProduct, out);
      }
      break;
    }
    case Kind::Product:
      print_node(*n.a, vars, kProduct, out);
      out += "*";
      print_node(*n.b, vars, kUnary, out);
      break;
    case Kind::Quotient:
      print_node(*n.a, vars, kProduct, out);
      out += "/";
      print_node(*n.b, vars, kUnary, out);
      break;
    case Kind::Negate:
      out += "-";
      print_node(*n.a, vars, kUnary, out);
      break;
    case Kind::Power:
      print_node(*n.a, vars, kAtom, out);
      out += "^" + std::to_string(n.exponent);
      break;
    case Kind::Call:
      out += func_name(n.func);
      out += "(";
      print_node(*n.a, vars, kSum, out);
      out += ")";
      break;
  }
  if (parens) out += ')';
}

}  // namespace

std::string to_string(const Expr& e, const std::vector<std::string>& variables) {
  std::string out;
  print_node(e.node(), variables, kSum, out);
  return out;
}

bool structurally_equal(const Expr& a, const Expr& b) {
  struct Rec {
    static bool eq(const Expr::Node& x, const Expr::Node& y) {
      if (x.kind != y.kind) return false;
      switch (x.kind) {
        case Kind::Constant: return x.value == y.value;
        case Kind::Variable: return x.index == y.index;
        case Kind::Power: return x.exponent == y.exponent && eq(*x.a, *y.a);
        case Kind::Call: return x.func == y.func && eq(*x.a, *y.a);
        case Kind::Negate: return eq(*x.a, *y.a);
        default: return eq(*x.a, *y.a) && eq(*x.b, *y.b);
      }
    }
  };
  return Rec::eq(a.node(), b.node());
}

}  // namespace vlyap
