#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vlyap/expr.hpp"

using namespace vlyap;

namespace {
const std::vector<std::string> kXY = {"x1", "x2"};

Eigen::VectorXd pt(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}
}  // namespace

TEST_CASE("parse accepts the Van der Pol component") {
  const Expr e = parse_expression("x1 - 1.25*(1 - x1^2)*x2", kXY);
  CHECK(e.arity() == 2);
  CHECK(eval(e, pt(0.0, 0.0)) == doctest::Approx(0.0));
  CHECK(eval(e, pt(1.0, 3.0)) == doctest::Approx(1.0));  // 1 - 1.25*0*3
  CHECK(eval(e, pt(2.0, 1.0)) == doctest::Approx(2.0 - 1.25 * (1.0 - 4.0)));
}

TEST_CASE("parse of the zero constant") {
  const Expr e = parse_expression("0", kXY);
  CHECK(e.is_constant(0.0));
  CHECK(eval(e, pt(3.0, 4.0)) == 0.0);
}

TEST_CASE("syntax error carries the offending position") {
  try {
    parse_expression("x1 +* x2", kXY);
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    CHECK(err.line == 1);
    CHECK(err.column == 5);
  }
}

TEST_CASE("unknown identifier and bad exponents are rejected") {
  CHECK_THROWS_AS(parse_expression("x1 + y", kXY), ParseError);
  CHECK_THROWS_AS(parse_expression("x1^-2", kXY), ParseError);
  CHECK_THROWS_AS(parse_expression("x1^2.5", kXY), ParseError);
  CHECK_THROWS_AS(parse_expression("x1^x2", kXY), ParseError);
  CHECK_THROWS_AS(parse_expression("sinh(x1)", kXY), ParseError);
}

TEST_CASE("evaluation examples") {
  CHECK(eval(parse_expression("-x2", kXY), pt(1.0, 2.0)) == doctest::Approx(-2.0));
  // Independent high-precision route for tanh: (1 - e^{-2x}) / (1 + e^{-2x}).
  const long double x = 0.5L;
  const long double ref = (1.0L - std::exp(-2.0L * x)) / (1.0L + std::exp(-2.0L * x));
  const double got = eval(parse_expression("tanh(0.5)", {}), Eigen::VectorXd(0));
  CHECK(std::abs(got - static_cast<double>(ref)) < 1e-15);
  CHECK(got == doctest::Approx(0.46211715726).epsilon(1e-10));
}

TEST_CASE("evaluation domain errors") {
  CHECK_THROWS_AS(eval(parse_expression("1/x1", kXY), pt(0.0, 1.0)), EvalError);
  CHECK_THROWS_AS(eval(parse_expression("sqrt(x1)", kXY), pt(-1.0, 0.0)), EvalError);
}

TEST_CASE("derivative examples") {
  const Expr d1 = differentiate(parse_expression("-x2", kXY), 1);
  CHECK(eval(d1, pt(5.0, 7.0)) == doctest::Approx(-1.0));

  // d/dx1 of the Van der Pol second component at the origin, against central
  // differences.
  const Expr f = parse_expression("x1 - 1.25*(1 - x1^2)*x2", kXY);
  const Expr df = differentiate(f, 0);
  const double h = 1e-6;
  const double fd = (eval(f, pt(h, 0.0)) - eval(f, pt(-h, 0.0))) / (2.0 * h);
  const double sym = eval(df, pt(0.0, 0.0));
  CHECK(sym == doctest::Approx(1.0));
  CHECK(std::abs(sym - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));

  // d/dx1 tanh(x1) = 1 - tanh(x1)^2 as a tree.
  const Expr dt = differentiate(parse_expression("tanh(x1)", kXY), 0);
  const Expr expect = parse_expression("1 - tanh(x1)^2", kXY);
  CHECK(structurally_equal(dt, expect));
}

TEST_CASE("derivatives match central differences on random expressions") {
  std::mt19937_64 rng(7);
  int checked = 0;
  while (checked < 1000) {
    const Expr e = vlyap::testing::random_expr(2, 3, rng);
    const Eigen::VectorXd x = vlyap::testing::random_point_in(Box::centered(2, 1.5), rng);
    const int var = static_cast<int>(rng() % 2);
    const Expr de = differentiate(e, var);
    const double h = 1e-6;
    Eigen::VectorXd xp = x, xm = x;
    xp[var] += h;
    xm[var] -= h;
    double f0, fp, fm, sym;
    try {
      f0 = eval(e, x);
      fp = eval(e, xp);
      fm = eval(e, xm);
      sym = eval(de, x);
    } catch (const EvalError&) {
      continue;
    }
    if (!std::isfinite(f0) || !std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(sym))
      continue;
    const double fd = (fp - fm) / (2.0 * h);
    const double scale = std::max({1.0, std::abs(sym), std::abs(fd)});
    if (std::abs(sym - fd) > 1e-5 * scale) {
      CAPTURE(to_string(e, kXY));
      CHECK(std::abs(sym - fd) <= 1e-5 * scale);
    }
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("interval evaluation basics") {
  const Expr sq = parse_expression("x1^2", {"x1"});
  const auto enc = interval_eval(sq, Box({Interval{-1.0, 2.0}}));
  REQUIRE(enc.has_value());
  CHECK(enc->lo <= 0.0);
  CHECK(enc->hi >= 4.0);
  CHECK(enc->lo >= -1e-12);  // even-power tightening, not [-2, 4]
  CHECK(enc->hi <= 4.0 + 1e-12);

  const Expr diff = parse_expression("x1 - x1", {"x1"});
  const auto enc2 = interval_eval(diff, Box({Interval{0.0, 1.0}}));
  REQUIRE(enc2.has_value());
  CHECK(enc2->contains(0.0));

  const Expr inv = parse_expression("1/x1", {"x1"});
  CHECK(!interval_eval(inv, Box({Interval{-1.0, 1.0}})).has_value());
  CHECK(interval_eval(inv, Box({Interval{0.5, 1.0}})).has_value());
}

TEST_CASE("interval soundness against sampled Van der Pol values") {
  const Expr f = parse_expression("x1 - 1.25*(1 - x1^2)*x2", kXY);
  const Box b({Interval{-0.1, 0.1}, Interval{-0.1, 0.1}});
  const auto enc = interval_eval(f, b);
  REQUIRE(enc.has_value());
  std::mt19937_64 rng(11);
  for (int i = 0; i < 10000; ++i) {
    const Eigen::VectorXd x = vlyap::testing::random_point_in(b, rng);
    const double v = eval(f, x);
    CHECK(enc->lo <= v);
    CHECK(v <= enc->hi);
  }
}

TEST_CASE("interval soundness on random expression/box/point triples") {
  std::mt19937_64 rng(13);
  int checked = 0, violations = 0;
  while (checked < 10000) {
    const Expr e = vlyap::testing::random_expr(2, 3, rng);
    const Box b = vlyap::testing::random_box(2, 2.0, rng);
    const auto enc = interval_eval(e, b);
    if (!enc) continue;
    const Eigen::VectorXd x = vlyap::testing::random_point_in(b, rng);
    double v;
    try {
      v = eval(e, x);
    } catch (const EvalError&) {
      continue;
    }
    if (!std::isfinite(v)) continue;
    if (!(enc->lo <= v && v <= enc->hi)) {
      ++violations;
      CAPTURE(to_string(e, kXY));
    }
    ++checked;
  }
  CHECK(violations == 0);
}

TEST_CASE("shrinking a box never widens the enclosure") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const Expr e = vlyap::testing::random_expr(2, 3, rng);
    Box outer = vlyap::testing::random_box(2, 2.0, rng);
    Box inner = outer;
    for (int i = 0; i < inner.dim(); ++i) {
      const double q = 0.25 * inner[i].width();
      inner[i] = Interval{inner[i].lo + q, inner[i].hi - q};
    }
    const auto wide = interval_eval(e, outer);
    const auto narrow = interval_eval(e, inner);
    if (!wide || !narrow) continue;
    CHECK(narrow->lo >= wide->lo - 1e-12);
    CHECK(narrow->hi <= wide->hi + 1e-12);
  }
}

TEST_CASE("print then parse is structurally identity") {
  const std::vector<std::string> corpus = {
      "x1 - 1.25*(1 - x1^2)*x2",
      "-x2",
      "0",
      "tanh(x1) + sin(x2)*cos(x1)",
      "x1^3 - 2*x2/(1 + x1^2)",
      "sqrt(exp(x1))",
      "-(x1*x2)",
      "-x1*x2",
      "1 - 2.5e-3*x1",
  };
  for (const auto& src : corpus) {
    const Expr e = parse_expression(src, kXY);
    const Expr back = parse_expression(to_string(e, kXY), kXY);
    CAPTURE(src);
    CAPTURE(to_string(e, kXY));
    CHECK(structurally_equal(e, back));
  }

  std::mt19937_64 rng(23);
  for (int i = 0; i < 2000; ++i) {
    const Expr e = vlyap::testing::random_expr(2, 4, rng);
    const std::string s = to_string(e, kXY);
    const Expr back = parse_expression(s, kXY);
    CAPTURE(s);
    CHECK(structurally_equal(e, back));
  }
}
