#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "vlyap/net.hpp"

using namespace vlyap;

namespace {

Mlp single_tanh_unit() {
  // One hidden unit h = tanh(x1), output = h.
  Mlp m;
  m.input_dim = 2;
  Mlp::Layer hidden;
  hidden.W = (Eigen::MatrixXd(1, 2) << 1.0, 0.0).finished();
  hidden.b = Eigen::VectorXd::Zero(1);
  Mlp::Layer out;
  out.W = (Eigen::MatrixXd(1, 1) << 1.0).finished();
  out.b = Eigen::VectorXd::Zero(1);
  m.layers = {hidden, out};
  return m;
}

Eigen::VectorXd pt(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

// Collect mutable references to every parameter of a net.
std::vector<double*> parameters(Mlp& m) {
  std::vector<double*> ps;
  for (auto& l : m.layers) {
    for (Eigen::Index i = 0; i < l.W.size(); ++i) ps.push_back(l.W.data() + i);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) ps.push_back(l.b.data() + i);
  }
  return ps;
}

std::vector<double> tape_values(const GradientTape& t) {
  std::vector<double> vs;
  for (const auto& g : t.grads) {
    for (Eigen::Index i = 0; i < g.W.size(); ++i) vs.push_back(*(g.W.data() + i));
    for (Eigen::Index i = 0; i < g.b.size(); ++i) vs.push_back(*(g.b.data() + i));
  }
  return vs;
}

}  // namespace

TEST_CASE("zero-weight network outputs zero") {
  Mlp m = Mlp::create(2, 2, 4, 1);
  for (auto& l : m.layers) {
    l.W.setZero();
    l.b.setZero();
  }
  CHECK(forward(m, pt(0.3, -0.7)) == 0.0);
  CHECK(input_gradient(m, pt(0.3, -0.7)).norm() == 0.0);
}

TEST_CASE("single tanh unit wiring") {
  const Mlp m = single_tanh_unit();
  CHECK(forward(m, pt(0.5, 7.0)) == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
  const Eigen::VectorXd g = input_gradient(m, pt(0.8, -3.0));
  const double t = std::tanh(0.8);
  CHECK(g[0] == doctest::Approx(1.0 - t * t).epsilon(1e-14));
  CHECK(g[1] == 0.0);
}

TEST_CASE("input gradients match central differences") {
  std::mt19937_64 rng(101);
  const Mlp m = Mlp::create(2, 2, 20, 7);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd x = vlyap::testing::random_point_in(Box::centered(2, 2.0), rng);
    const Eigen::VectorXd g = input_gradient(m, x);
    for (int i = 0; i < 2; ++i) {
      const double h = 1e-6;
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (forward(m, xp) - forward(m, xm)) / (2.0 * h);
      CHECK(std::abs(g[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("backprop with zero seeds yields a zero tape") {
  const Mlp m = Mlp::create(2, 2, 3, 3);
  GradientTape tape(m);
  backprop(m, {{pt(0.1, 0.2), {}, 0.0, 0.0}}, tape);
  CHECK(tape.max_abs() == 0.0);
}

TEST_CASE("backprop chain rule on a data-loss term") {
  // loss = (W(x) - target)^2, seed = 2 (W - target).
  Mlp m = Mlp::create(2, 1, 3, 11);
  const Eigen::VectorXd x = pt(0.4, -0.2);
  const double target = 0.25;
  const double w = forward(m, x);
  GradientTape tape(m);
  backprop(m, {{x, {}, 2.0 * (w - target), 0.0}}, tape);

  auto params = parameters(m);
  const auto grads = tape_values(tape);
  REQUIRE(params.size() == grads.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const double h = 1e-6;
    const double saved = *params[i];
    *params[i] = saved + h;
    const double lp = std::pow(forward(m, x) - target, 2);
    *params[i] = saved - h;
    const double lm = std::pow(forward(m, x) - target, 2);
    *params[i] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    CHECK(std::abs(grads[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("backprop of a PDE-style loss with gradient terms matches finite differences") {
  // loss = sum over pts of (grad W . f + psi (1 - W))^2 with psi = 0.1 (1 + W) |x|^2.
  Mlp m = Mlp::create(2, 2, 3, 17);
  const std::vector<Eigen::VectorXd> xs = {pt(0.3, 0.5), pt(-0.8, 0.1), pt(1.2, -0.9)};
  auto field = [](const Eigen::VectorXd& x) {
    return pt(-x[1], x[0] - 1.25 * (1.0 - x[0] * x[0]) * x[1]);
  };
  auto loss = [&](const Mlp& net) {
    double total = 0.0;
    for (const auto& x : xs) {
      const double w = forward(net, x);
      const double u = input_gradient(net, x).dot(field(x));
      const double psi = 0.1 * (1.0 + w) * x.squaredNorm();
      total += std::pow(u + psi * (1.0 - w), 2);
    }
    return total;
  };

  GradientTape tape(m);
  for (const auto& x : xs) {
    const double w = forward(m, x);
    const Eigen::VectorXd f = field(x);
    const double u = input_gradient(m, x).dot(f);
    const double psi = 0.1 * (1.0 + w) * x.squaredNorm();
    const double r = u + psi * (1.0 - w);
    // dr/dw: psi depends on w, d(psi (1-w))/dw = 0.1 |x|^2 (1 - w) - psi.
    const double dr_dw = 0.1 * x.squaredNorm() * (1.0 - w) - psi;
    backprop(m, {{x, f, 2.0 * r * dr_dw, 2.0 * r}}, tape);
  }

  auto params = parameters(m);
  const auto grads = tape_values(tape);
  for (size_t i = 0; i < params.size(); ++i) {
    const double h = 1e-6;
    const double saved = *params[i];
    *params[i] = saved + h;
    const double lp = loss(m);
    *params[i] = saved - h;
    const double lm = loss(m);
    *params[i] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    CHECK(std::abs(grads[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("interval forward on a degenerate box is a thin enclosure") {
  const Mlp m = Mlp::create(2, 2, 10, 23);
  const Eigen::VectorXd x = pt(0.7, -1.1);
  const Box b({Interval::point(x[0]), Interval::point(x[1])});
  const Interval enc = interval_forward(m, b);
  const double v = forward(m, x);
  CHECK(enc.contains(v));
  CHECK(enc.width() < 1e-12);
}

TEST_CASE("single tanh unit interval forward is tight") {
  const Mlp m = single_tanh_unit();
  const Box b({Interval{-1.0, 1.0}, Interval{-5.0, 5.0}});
  const Interval enc = interval_forward(m, b);
  CHECK(enc.lo == doctest::Approx(std::tanh(-1.0)).epsilon(1e-14));
  CHECK(enc.hi == doctest::Approx(std::tanh(1.0)).epsilon(1e-14));
}

TEST_CASE("interval forward and gradient are sound on random sub-boxes") {
  std::mt19937_64 rng(131);
  const Mlp m = Mlp::create(2, 2, 10, 29);
  for (int trial = 0; trial < 1000; ++trial) {
    const Box b = vlyap::testing::random_box(2, 2.5, rng);
    const Interval enc = interval_forward(m, b);
    const auto genc = interval_input_gradient(m, b);
    for (int s = 0; s < 10; ++s) {
      const Eigen::VectorXd x = vlyap::testing::random_point_in(b, rng);
      CHECK(enc.contains(forward(m, x)));
      const Eigen::VectorXd g = input_gradient(m, x);
      for (int i = 0; i < 2; ++i) CHECK(genc[static_cast<size_t>(i)].contains(g[i]));
    }
  }
}

TEST_CASE("checkpoints round trip bit-exactly") {
  const Mlp m = Mlp::create(3, 2, 7, 12345);
  std::stringstream ss;
  write_checkpoint(m, ss);
  const Mlp back = read_checkpoint(ss);
  CHECK(back.input_dim == m.input_dim);
  CHECK(back.seed == m.seed);
  REQUIRE(back.layers.size() == m.layers.size());
  for (size_t k = 0; k < m.layers.size(); ++k) {
    CHECK(back.layers[k].W.rows() == m.layers[k].W.rows());
    for (Eigen::Index i = 0; i < m.layers[k].W.size(); ++i)
      CHECK(*(back.layers[k].W.data() + i) == *(m.layers[k].W.data() + i));
    for (Eigen::Index i = 0; i < m.layers[k].b.size(); ++i)
      CHECK(back.layers[k].b[i] == m.layers[k].b[i]);
  }
}

TEST_CASE("checkpoint rejects corrupt headers") {
  std::stringstream ss("not-a-checkpoint 9");
  CHECK_THROWS_AS(read_checkpoint(ss), CheckpointError);
}
