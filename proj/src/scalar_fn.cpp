#include "vlyap/scalar_fn.hpp"

#include <cmath>
#include <cstdio>

namespace vlyap {

namespace {

std::string smt_number(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", std::abs(v));
  std::string s(buf);
  // SMT-LIB decimals need a dot; integers and exponent forms are normalized.
  if (s.find('e') != std::string::npos || s.find('E') != std::string::npos) {
    // Expand scientific notation as a product with a power of ten.
    std::snprintf(buf, sizeof(buf), "%.17f", std::abs(v));
    s = buf;
  }
  if (s.find('.') == std::string::npos) s += ".0";
  if (v < 0.0) return "(- " + s + ")";
  return s;
}

Box sub_box(const Box& b, int offset, int len) {
  std::vector<Interval> dims;
  dims.reserve(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) dims.push_back(b[offset + i]);
  return Box(std::move(dims));
}

class ExprFn final : public ScalarFn {
 public:
  explicit ExprFn(Expr e) : e_(std::move(e)) {}
  int arity() const override { return e_.arity(); }
  double eval_point(const Eigen::VectorXd& x) const override { return eval(e_, x); }
  std::optional<Interval> eval_interval(const Box& b) const override {
    return vlyap::interval_eval(e_, b);
  }
  std::string smt_term(SmtContext& ctx) const override;

 private:
  Expr e_;
};

std::string expr_smt(const Expr::Node& n, const std::vector<std::string>& vars) {
  using Kind = Expr::Kind;
  using Func = Expr::Func;
  switch (n.kind) {
    case Kind::Constant: return smt_number(n.value);
    case Kind::Variable: return vars.at(static_cast<size_t>(n.index));
    case Kind::Sum: return "(+ " + expr_smt(*n.a, vars) + " " + expr_smt(*n.b, vars) + ")";
    case Kind::Product: return "(* " + expr_smt(*n.a, vars) + " " + expr_smt(*n.b, vars) + ")";
    case Kind::Quotient: return "(/ " + expr_smt(*n.a, vars) + " " + expr_smt(*n.b, vars) + ")";
    case Kind::Negate: return "(- " + expr_smt(*n.a, vars) + ")";
    case Kind::Power: {
      if (n.exponent == 0) return "1.0";
      const std::string base = expr_smt(*n.a, vars);
      std::string out = base;
      for (int i = 1; i < n.exponent; ++i) out = "(* " + out + " " + base + ")";
      return out;
    }
    case Kind::Call: {
      const char* name = "";
      switch (n.func) {
        case Func::Sin: name = "sin"; break;
        case Func::Cos: name = "cos"; break;
        case Func::Exp: name = "exp"; break;
        case Func::Tanh: name = "tanh"; break;
        case Func::Sqrt: name = "sqrt"; break;
      }
      return std::string("(") + name + " " + expr_smt(*n.a, vars) + ")";
    }
  }
  return "0.0";
}

std::string ExprFn::smt_term(SmtContext& ctx) const { return expr_smt(e_.node(), ctx.var_names); }

class ConstFn final : public ScalarFn {
 public:
  explicit ConstFn(double v) : v_(v) {}
  int arity() const override { return 0; }
  double eval_point(const Eigen::VectorXd&) const override { return v_; }
  std::optional<Interval> eval_interval(const Box&) const override { return Interval::point(v_); }
  std::string smt_term(SmtContext&) const override { return smt_number(v_); }

 private:
  double v_;
};

class ScaleFn final : public ScalarFn {
 public:
  ScaleFn(double s, ScalarFnPtr f) : s_(s), f_(std::move(f)) {}
  int arity() const override { return f_->arity(); }
  double eval_point(const Eigen::VectorXd& x) const override { return s_ * f_->eval_point(x); }
  std::optional<Interval> eval_interval(const Box& b) const override {
    auto enc = f_->eval_interval(b);
    if (!enc) return std::nullopt;
    return Interval::point(s_) * *enc;
  }
  std::string smt_term(SmtContext& ctx) const override {
    return "(* " + smt_number(s_) + " " + f_->smt_term(ctx) + ")";
  }

 private:
  double s_;
  ScalarFnPtr f_;
};

class SumFn final : public ScalarFn {
 public:
  explicit SumFn(std::vector<ScalarFnPtr> terms) : terms_(std::move(terms)) {}
  int arity() const override {
    int a = 0;
    for (const auto& t : terms_) a = std::max(a, t->arity());
    return a;
  }
  double eval_point(const Eigen::VectorXd& x) const override {
    double s = 0.0;
    for (const auto& t : terms_) s += t->eval_point(x);
    return s;
  }
  std::optional<Interval> eval_interval(const Box& b) const override {
    Interval acc = Interval::point(0.0);
    for (const auto& t : terms_) {
      auto enc = t->eval_interval(b);
      if (!enc) return std::nullopt;
      acc = acc + *enc;
    }
    return acc;
  }
  std::string smt_term(SmtContext& ctx) const override {
    if (terms_.empty()) return "0.0";
    if (terms_.size() == 1) return terms_[0]->smt_term(ctx);
    std::string out = "(+";
    for (const auto& t : terms_) out += " " + t->smt_term(ctx);
    return out + ")";
  }

 private:
  std::vector<ScalarFnPtr> terms_;
};

class QuadFormFn final : public ScalarFn {
 public:
  QuadFormFn(Eigen::MatrixXd P, int offset, int total_arity)
      : P_(std::move(P)), offset_(offset), arity_(total_arity) {
    P_ = 0.5 * (P_ + P_.transpose()).eval();
  }
  int arity() const override { return arity_; }
  double eval_point(const Eigen::VectorXd& x) const override {
    const Eigen::VectorXd s = x.segment(offset_, P_.rows());
    return s.dot(P_ * s);
  }
  std::optional<Interval> eval_interval(const Box& b) const override {
    // Diagonal terms via even powers (tight), cross terms naturally.
    Interval acc = Interval::point(0.0);
    const int n = static_cast<int>(P_.rows());
    for (int i = 0; i < n; ++i) {
      acc = acc + Interval::point(P_(i, i)) * interval_pow(b[offset_ + i], 2);
      for (int j = i + 1; j < n; ++j)
        acc = acc + Interval::point(2.0 * P_(i, j)) * b[offset_ + i] * b[offset_ + j];
    }
    return acc;
  }
  std::string smt_term(SmtContext& ctx) const override {
    const int n = static_cast<int>(P_.rows());
    std::string out = "(+";
    for (int i = 0; i < n; ++i) {
      const std::string xi = ctx.var_names.at(static_cast<size_t>(offset_ + i));
      out += " (* " + smt_number(P_(i, i)) + " " + xi + " " + xi + ")";
      for (int j = i + 1; j < n; ++j) {
        const std::string xj = ctx.var_names.at(static_cast<size_t>(offset_ + j));
        out += " (* " + smt_number(2.0 * P_(i, j)) + " " + xi + " " + xj + ")";
      }
    }
    return out + ")";
  }

 private:
  Eigen::MatrixXd P_;
  int offset_;
  int arity_;
};

// Shared emission of network neurons: defines tanh activations layer by
// layer and returns the symbol list of the last hidden layer.
std::vector<std::string> emit_hidden_layers(const Mlp& net, int offset, SmtContext& ctx,
                                            const std::string& stem) {
  std::vector<std::string> cur;
  for (int i = 0; i < net.input_dim; ++i)
    cur.push_back(ctx.var_names.at(static_cast<size_t>(offset + i)));
  const size_t L = net.layers.size();
  for (size_t k = 0; k + 1 < L; ++k) {
    const auto& l = net.layers[k];
    std::vector<std::string> next;
    for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
      std::string z = "(+ " + smt_number(l.b[i]);
      for (Eigen::Index j = 0; j < l.W.cols(); ++j)
        z += " (* " + smt_number(l.W(i, j)) + " " + cur[static_cast<size_t>(j)] + ")";
      z += ")";
      const std::string name = ctx.fresh(stem + "_h" + std::to_string(k));
      ctx.defs << "(define-fun " << name << " () Real (tanh " << z << "))\n";
      next.push_back(name);
    }
    cur = std::move(next);
  }
  return cur;
}

class MlpValueFn final : public ScalarFn {
 public:
  MlpValueFn(std::shared_ptr<const Mlp> net, int offset, int total_arity)
      : net_(std::move(net)), offset_(offset), arity_(total_arity) {}
  int arity() const override { return arity_; }
  double eval_point(const Eigen::VectorXd& x) const override {
    return forward(*net_, x.segment(offset_, net_->input_dim));
  }
  std::optional<Interval> eval_interval(const Box& b) const override {
    return interval_forward(*net_, sub_box(b, offset_, net_->input_dim));
  }
  std::string smt_term(SmtContext& ctx) const override {
    const auto hidden = emit_hidden_layers(*net_, offset_, ctx, "w");
    const auto& out = net_->layers.back();
    std::string z = "(+ " + smt_number(out.b[0]);
    for (Eigen::Index j = 0; j < out.W.cols(); ++j)
      z += " (* " + smt_number(out.W(0, j)) + " " + hidden[static_cast<size_t>(j)] + ")";
    return z + ")";
  }

 private:
  std::shared_ptr<const Mlp> net_;
  int offset_;
  int arity_;
};

class MlpGradDotFn final : public ScalarFn {
 public:
  MlpGradDotFn(std::shared_ptr<const Mlp> net, int offset, int total_arity,
               std::vector<Expr> field)
      : net_(std::move(net)), offset_(offset), arity_(total_arity), field_(std::move(field)) {
    if (static_cast<int>(field_.size()) != net_->input_dim)
      throw std::invalid_argument("mlp_grad_dot_fn: field size must match network input size");
  }
  int arity() const override { return arity_; }
  double eval_point(const Eigen::VectorXd& x) const override {
    const Eigen::VectorXd g = input_gradient(*net_, x.segment(offset_, net_->input_dim));
    double s = 0.0;
    for (size_t k = 0; k < field_.size(); ++k)
      s += g[static_cast<Eigen::Index>(k)] * eval(field_[k], x);
    return s;
  }
  std::optional<Interval> eval_interval(const Box& b) const override {
    const auto g = interval_input_gradient(*net_, sub_box(b, offset_, net_->input_dim));
    Interval acc = Interval::point(0.0);
    for (size_t k = 0; k < field_.size(); ++k) {
      auto fe = vlyap::interval_eval(field_[k], b);
      if (!fe) return std::nullopt;
      acc = acc + g[k] * *fe;
    }
    return acc;
  }
  std::string smt_term(SmtContext& ctx) const override {
    // Neurons, their sech^2 derivatives, then the backward sweep
    // g_k = W_k^T (d_k .* g_{k+1}) down to the input layer.
    const size_t L = net_->layers.size();
    std::vector<std::vector<std::string>> acts;  // per hidden layer
    {
      std::vector<std::string> cur;
      for (int i = 0; i < net_->input_dim; ++i)
        cur.push_back(ctx.var_names.at(static_cast<size_t>(offset_ + i)));
      for (size_t k = 0; k + 1 < L; ++k) {
        const auto& l = net_->layers[k];
        std::vector<std::string> next;
        for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
          std::string z = "(+ " + smt_number(l.b[i]);
          for (Eigen::Index j = 0; j < l.W.cols(); ++j)
            z += " (* " + smt_number(l.W(i, j)) + " " + cur[static_cast<size_t>(j)] + ")";
          z += ")";
          const std::string name = ctx.fresh("g_h" + std::to_string(k));
          ctx.defs << "(define-fun " << name << " () Real (tanh " << z << "))\n";
          next.push_back(name);
        }
        acts.push_back(next);
        cur = std::move(next);
      }
    }
    // Backward: start from the output row.
    std::vector<std::string> gbar;
    const auto& out = net_->layers.back();
    for (Eigen::Index j = 0; j < out.W.cols(); ++j) gbar.push_back(smt_number(out.W(0, j)));
    for (size_t k = L - 1; k-- > 0;) {
      const auto& l = net_->layers[k];
      std::vector<std::string> scaled;
      for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
        const std::string& h = acts[k][static_cast<size_t>(i)];
        const std::string name = ctx.fresh("g_s" + std::to_string(k));
        ctx.defs << "(define-fun " << name << " () Real (* (- 1.0 (* " << h << " " << h << ")) "
                 << gbar[static_cast<size_t>(i)] << "))\n";
        scaled.push_back(name);
      }
      std::vector<std::string> next;
      for (Eigen::Index j = 0; j < l.W.cols(); ++j) {
        std::string s = "(+";
        for (Eigen::Index i = 0; i < l.W.rows(); ++i)
          s += " (* " + smt_number(l.W(i, j)) + " " + scaled[static_cast<size_t>(i)] + ")";
        s += ")";
        const std::string name = ctx.fresh("g_b" + std::to_string(k));
        ctx.defs << "(define-fun " << name << " () Real " << s << ")\n";
        next.push_back(name);
      }
      gbar = std::move(next);
    }
    std::string dot = "(+";
    for (size_t k = 0; k < field_.size(); ++k)
      dot += " (* " + gbar[k] + " " + expr_smt(field_[k].node(), ctx.var_names) + ")";
    return dot + ")";
  }

 private:
  std::shared_ptr<const Mlp> net_;
  int offset_;
  int arity_;
  std::vector<Expr> field_;
};

}  // namespace

ScalarFnPtr expr_fn(Expr e) { return std::make_shared<ExprFn>(std::move(e)); }
ScalarFnPtr const_fn(double v) { return std::make_shared<ConstFn>(v); }
ScalarFnPtr scale_fn(double s, ScalarFnPtr f) { return std::make_shared<ScaleFn>(s, std::move(f)); }
ScalarFnPtr sum_fn(std::vector<ScalarFnPtr> terms) { return std::make_shared<SumFn>(std::move(terms)); }
ScalarFnPtr quad_form_fn(Eigen::MatrixXd P, int offset, int total_arity) {
  return std::make_shared<QuadFormFn>(std::move(P), offset, total_arity);
}
ScalarFnPtr mlp_value_fn(std::shared_ptr<const Mlp> net, int offset, int total_arity) {
  return std::make_shared<MlpValueFn>(std::move(net), offset, total_arity);
}
ScalarFnPtr mlp_grad_dot_fn(std::shared_ptr<const Mlp> net, int offset, int total_arity,
                            std::vector<Expr> field) {
  return std::make_shared<MlpGradDotFn>(std::move(net), offset, total_arity, std::move(field));
}

}  // namespace vlyap
