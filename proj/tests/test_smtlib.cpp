#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "vlyap/smtlib.hpp"

using namespace vlyap;

namespace {

const std::vector<std::string> kXY = {"x1", "x2"};

bool balanced(const std::string& s) {
  int depth = 0;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (depth < 0) return false;
  }
  return depth == 0;
}

size_t count(const std::string& hay, const std::string& needle) {
  size_t n = 0, pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

}  // namespace

TEST_CASE("expression query renders a well-formed script") {
  Query q;
  q.id = "demo";
  q.goal = expr_fn(parse_expression("x1^2 + 0.1*x2", kXY));
  q.tau = -0.5;
  q.region = Box({Interval{-1.0, 1.0}, Interval{-2.0, 2.0}});
  q.constraints = {{expr_fn(parse_expression("x1 + x2", kXY)), 0.0, 1.0}};
  const std::string s = to_smtlib(q);

  CHECK(balanced(s));
  CHECK(s.find("(set-logic QF_NRA)") != std::string::npos);
  CHECK(count(s, "(declare-fun") == 2);
  CHECK(s.find("(check-sat)") != std::string::npos);
  CHECK(s.find("(exit)") != std::string::npos);
  // Negated claim: goal strictly above tau.
  CHECK(s.find("(assert (> ") != std::string::npos);
  // 17-significant-digit constants.
  CHECK(s.find("0.10000000000000001") != std::string::npos);
  // Box bounds asserted for both variables.
  CHECK(count(s, "(assert (and (<= ") == 2);
  // The two-sided constraint appears as two assertions.
  CHECK(count(s, "(assert (<= ") == 2);
}

TEST_CASE("custom variable names are used") {
  Query q;
  q.goal = expr_fn(parse_expression("x1", {"x1"}));
  q.tau = 1.0;
  q.region = Box({Interval{0.0, 0.5}});
  const std::string s = to_smtlib(q, {"y"});
  CHECK(s.find("(declare-fun y () Real)") != std::string::npos);
  CHECK_THROWS_AS(to_smtlib(q, {"a", "b"}), SmtExportError);
}

TEST_CASE("network goals unroll into tanh definitions") {
  auto net = std::make_shared<Mlp>(Mlp::create(2, 2, 3, 5));
  Query q;
  q.goal = mlp_value_fn(net, 0, 2);
  q.tau = 0.25;
  q.region = Box::centered(2, 1.0);
  const std::string s = to_smtlib(q);
  CHECK(balanced(s));
  CHECK(count(s, "(define-fun") == 6);  // two hidden layers of width 3
  CHECK(count(s, "(tanh") == 6);
}

TEST_CASE("gradient-dot goals emit a backward sweep") {
  auto net = std::make_shared<Mlp>(Mlp::create(2, 2, 3, 5));
  std::vector<Expr> field = {parse_expression("-x2", kXY),
                             parse_expression("x1 - 1.25*(1 - x1^2)*x2", kXY)};
  Query q;
  q.goal = mlp_grad_dot_fn(net, 0, 2, field);
  q.tau = -0.001;
  q.region = Box::centered(2, 1.0);
  const std::string s = to_smtlib(q);
  CHECK(balanced(s));
  CHECK(count(s, "(tanh") == 6);
  CHECK(s.find("g_b0") != std::string::npos);  // input-layer gradient symbols
}

TEST_CASE("negative constants render as SMT negation terms") {
  Query q;
  q.goal = expr_fn(parse_expression("x1 - 1.25", {"x1"}));
  q.tau = -0.5;
  q.region = Box({Interval{-1.0, 1.0}});
  const std::string s = to_smtlib(q);
  CHECK(s.find("(- 1.25)") != std::string::npos);
  CHECK(s.find("(- 0.5)") != std::string::npos);
  CHECK(s.find("(- 1.0)") != std::string::npos);
}
