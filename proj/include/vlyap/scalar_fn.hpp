#pragma once

#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vlyap/expr.hpp"
#include "vlyap/interval.hpp"
#include "vlyap/net.hpp"

namespace vlyap {

/// Emission context for SMT-LIB rendering: auxiliary define-funs accumulate
/// in `defs`, terms reference box variables by name.
struct SmtContext {
  std::vector<std::string> var_names;
  std::ostringstream defs;
  int next_aux = 0;

  std::string fresh(const std::string& stem) { return stem + "_" + std::to_string(next_aux++); }
};

/// A scalar function over a box, evaluable both pointwise (exact doubles)
/// and on boxes (sound interval enclosure). Implementations are immutable.
class ScalarFn {
 public:
  virtual ~ScalarFn() = default;
  virtual int arity() const = 0;
  /// May throw EvalError on domain violations.
  virtual double eval_point(const Eigen::VectorXd& x) const = 0;
  /// nullopt when evaluation may be undefined somewhere in the box.
  virtual std::optional<Interval> eval_interval(const Box& b) const = 0;
  /// Returns an SMT-LIB term; auxiliary definitions go to ctx.defs.
  virtual std::string smt_term(SmtContext& ctx) const = 0;
};

using ScalarFnPtr = std::shared_ptr<const ScalarFn>;

/// Wrap an expression (variables = box coordinates).
ScalarFnPtr expr_fn(Expr e);

/// Constant function.
ScalarFnPtr const_fn(double v);

/// s * f
ScalarFnPtr scale_fn(double s, ScalarFnPtr f);

/// Sum of terms.
ScalarFnPtr sum_fn(std::vector<ScalarFnPtr> terms);

/// Quadratic form x_sub^T P x_sub on coordinates [offset, offset + P.rows()).
ScalarFnPtr quad_form_fn(Eigen::MatrixXd P, int offset, int total_arity);

/// Network value W(x_sub) on coordinates [offset, offset + input_dim).
ScalarFnPtr mlp_value_fn(std::shared_ptr<const Mlp> net, int offset, int total_arity);

/// grad W(x_sub) . field(x): the field components are expressions over the
/// full coordinate vector; their count must equal the network input size.
ScalarFnPtr mlp_grad_dot_fn(std::shared_ptr<const Mlp> net, int offset, int total_arity,
                            std::vector<Expr> field);

}  // namespace vlyap
