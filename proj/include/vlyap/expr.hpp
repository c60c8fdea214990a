#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vlyap/interval.hpp"

namespace vlyap {

/// Error raised by the expression parser, carrying a 1-based source position.
struct ParseError : std::runtime_error {
  ParseError(std::string msg, int line_, int column_)
      : std::runtime_error(std::move(msg)), line(line_), column(column_) {}
  int line;
  int column;
};

/// Error raised by exact evaluation (division by zero, sqrt of a negative).
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Immutable arithmetic expression tree over variables x0..x{arity-1}.
/// Nodes: constant, variable, sum, product, quotient, negation, integer
/// power (exponent >= 0) and the unary functions sin, cos, exp, tanh, sqrt.
/// Trees are shared; copying an Expr is cheap and thread-safe.
class Expr {
 public:
  enum class Kind { Constant, Variable, Sum, Product, Quotient, Negate, Power, Call };
  enum class Func { Sin, Cos, Exp, Tanh, Sqrt };

  struct Node {
    Kind kind;
    double value = 0.0;           // Constant
    int index = 0;                // Variable
    int exponent = 0;             // Power
    Func func = Func::Sin;        // Call
    std::shared_ptr<const Node> a, b;
  };

  Expr() : Expr(constant(0.0)) {}

  static Expr constant(double v);
  static Expr variable(int index, int arity);

  int arity() const { return arity_; }
  const Node& node() const { return *node_; }

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  friend Expr pow(const Expr& a, int exponent);
  friend Expr apply(Func f, const Expr& a);

  /// True iff the tree is the literal constant v.
  bool is_constant(double v) const {
    return node_->kind == Kind::Constant && node_->value == v;
  }

 private:
  Expr(std::shared_ptr<const Node> n, int arity) : node_(std::move(n)), arity_(arity) {}

  std::shared_ptr<const Node> node_;
  int arity_;

  friend class ExprBuilder;
};

inline Expr sin(const Expr& a) { return apply(Expr::Func::Sin, a); }
inline Expr cos(const Expr& a) { return apply(Expr::Func::Cos, a); }
inline Expr exp(const Expr& a) { return apply(Expr::Func::Exp, a); }
inline Expr tanh(const Expr& a) { return apply(Expr::Func::Tanh, a); }
inline Expr sqrt(const Expr& a) { return apply(Expr::Func::Sqrt, a); }

/// Parse an infix expression over the named variables (index = position in
/// `variables`). Throws ParseError with line/column on malformed input,
/// unknown identifiers, and non-integer or negative exponents.
Expr parse_expression(const std::string& source, const std::vector<std::string>& variables);

/// Exact recursive evaluation in double precision. Throws EvalError on
/// division by zero or sqrt of a negative value.
double eval(const Expr& e, const Eigen::VectorXd& point);

/// Symbolic partial derivative with respect to variable `var`.
Expr differentiate(const Expr& e, int var);

/// Sound interval enclosure of {eval(e, x) : x in box}. Returns nullopt when
/// the evaluation may be undefined somewhere in the box (division by an
/// interval containing zero, sqrt of a partially negative interval); callers
/// treat that as inconclusive.
std::optional<Interval> interval_eval(const Expr& e, const Box& box);

/// Infix rendering; parse_expression(to_string(e), ...) is structurally
/// equal to e.
std::string to_string(const Expr& e, const std::vector<std::string>& variables = {});

bool structurally_equal(const Expr& a, const Expr& b);

/// Jacobian of an expression vector: entry (i, j) = d f_i / d x_j.
std::vector<std::vector<Expr>> jacobian(const std::vector<Expr>& f);

}  // namespace vlyap
