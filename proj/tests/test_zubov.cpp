#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vlyap/zubov.hpp"

using namespace vlyap;

namespace {

const std::vector<std::string> kX1 = {"x1"};
const std::vector<std::string> kXY = {"x1", "x2"};

std::vector<Expr> decay_1d() { return {parse_expression("-x1", kX1)}; }

std::vector<Expr> vdp(double mu) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "x1 - %.17g*(1 - x1^2)*x2", mu);
  return {parse_expression("-x2", kXY), parse_expression(buf, kXY)};
}

Mlp zero_net(int dim) {
  Mlp m = Mlp::create(dim, 2, 3, 1);
  for (auto& l : m.layers) {
    l.W.setZero();
    l.b.setZero();
  }
  return m;
}

Mlp tanh_unit_1d() {
  Mlp m;
  m.input_dim = 1;
  Mlp::Layer hidden{(Eigen::MatrixXd(1, 1) << 1.0).finished(), Eigen::VectorXd::Zero(1)};
  Mlp::Layer out{(Eigen::MatrixXd(1, 1) << 1.0).finished(), Eigen::VectorXd::Zero(1)};
  m.layers = {hidden, out};
  return m;
}

Eigen::VectorXd vec1(double a) { return Eigen::VectorXd::Constant(1, a); }

}  // namespace

TEST_CASE("the closed-form 1-D solution satisfies the PDE identity") {
  // For x' = -x the cost integral is x^2/2, so W(x) = tanh(alpha x^2 / 2)
  // solves grad W . f = -alpha (1 + W) |x|^2 (1 - W) exactly.
  const double alpha = 0.1;
  for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
    const double w = std::tanh(alpha * x * x / 2.0);
    const double dw = (1.0 - w * w) * alpha * x;
    const double lhs = dw * (-x);
    const double rhs = -alpha * (1.0 + w) * x * x * (1.0 - w);
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("residual loss of the zero net at the origin vanishes") {
  const Mlp m = zero_net(1);
  const double l = residual_loss(m, decay_1d(), {Eigen::VectorXd::Zero(1)}, 0.1);
  CHECK(l == doctest::Approx(0.0));
}

TEST_CASE("residual loss matches the hand-computed value for a tanh unit") {
  // W = tanh(x), f = -x: r = (1 - W^2)(-x) + alpha x^2 (1 - W^2).
  const Mlp m = tanh_unit_1d();
  const double alpha = 0.1;
  const double x = 0.8;
  const double w = std::tanh(x);
  const double r = (1.0 - w * w) * (-x) + alpha * x * x * (1.0 - w * w);
  const double got = residual_loss(m, decay_1d(), {vec1(x)}, alpha);
  CHECK(got == doctest::Approx(r * r).epsilon(1e-12));
}

TEST_CASE("residual loss of a random untrained net is strictly positive") {
  const Mlp m = Mlp::create(2, 2, 5, 99);
  std::mt19937_64 rng(3);
  std::vector<Eigen::VectorXd> pts;
  for (int i = 0; i < 16; ++i)
    pts.push_back(vlyap::testing::random_point_in(Box::centered(2, 2.0), rng));
  CHECK(residual_loss(m, vdp(1.25), pts, 0.1) > 0.0);
}

TEST_CASE("boundary loss cases") {
  std::mt19937_64 rng(5);
  std::vector<Eigen::VectorXd> pts;
  for (int i = 0; i < 32; ++i)
    pts.push_back(vlyap::testing::random_point_in(Box::centered(2, 0.3), rng));

  // W identically 0 sits exactly on the pinched envelope c1 = c2 = 0.
  CHECK(boundary_loss(zero_net(2), pts, 0.1, 0.0, 0.0) == doctest::Approx(0.0));
  // With positive envelopes, W = 0 violates the lower bound.
  CHECK(boundary_loss(zero_net(2), pts, 0.1, 1.0, 2.0) > 0.0);

  // W identically ~1 violates the upper envelope near the origin.
  Mlp one = zero_net(2);
  one.layers.back().b[0] = 1.0;
  CHECK(boundary_loss(one, pts, 0.1, 1.0, 2.0) > 0.0);

  // A function strictly between the envelopes incurs no penalty:
  // W = tanh(x1) over points with x1 in (0.1, 0.2), envelopes far apart.
  Mlp unit;
  unit.input_dim = 2;
  unit.layers = {{(Eigen::MatrixXd(1, 2) << 1.0, 0.0).finished(), Eigen::VectorXd::Zero(1)},
                 {(Eigen::MatrixXd(1, 1) << 1.0).finished(), Eigen::VectorXd::Zero(1)}};
  std::vector<Eigen::VectorXd> band;
  for (int i = 0; i < 8; ++i) {
    Eigen::VectorXd p(2);
    p << 0.1 + 0.0125 * i, 0.0;
    band.push_back(p);
  }
  // For x in the band, W = tanh(x1); pick c1, c2 with
  // tanh(0.1 c1 x1^2) < tanh(x1) < tanh(0.1 c2 x1^2): c1 = 1, c2 = 1000.
  CHECK(boundary_loss(unit, band, 0.1, 1.0, 1000.0) == doctest::Approx(0.0));
}

TEST_CASE("labeling the equilibrium gives zero") {
  ZubovConfig cfg;
  cfg.domain = Box::centered(1, 2.0);
  const auto lab = label_trajectory(decay_1d(), Eigen::VectorXd::Zero(1), cfg);
  CHECK(lab.converged);
  CHECK(lab.what == doctest::Approx(0.0));
}

TEST_CASE("labeling the 1-D decay matches the closed-form integral") {
  ZubovConfig cfg;
  cfg.domain = Box::centered(1, 2.0);
  const auto lab = label_trajectory(decay_1d(), vec1(1.0), cfg);
  CHECK(lab.converged);
  // integral of e^{-2t} over [0, inf) is 1/2, so the label is tanh(0.05).
  CHECK(lab.what == doctest::Approx(std::tanh(0.05)).epsilon(1e-6));
  CHECK(lab.what == doctest::Approx(0.04996).epsilon(1e-3));
  CHECK(lab.what < 1.0 - 1e-6);
}

TEST_CASE("labeling a diverging Van der Pol state saturates at one") {
  ZubovConfig cfg;
  cfg.domain = Box({Interval{-2.5, 2.5}, Interval{-5.5, 5.5}});
  Eigen::VectorXd far(2);
  far << 2.4, 5.0;  // far outside the limit-cycle-bounded region
  const auto lab = label_trajectory(vdp(1.25), far, cfg);
  CHECK(!lab.converged);
  CHECK(lab.what == 1.0);
}

TEST_CASE("sampling is reproducible and n = 0 is empty") {
  const Box d = Box::centered(2, 1.0);
  CHECK(sample_collocation(d, 0, 7).empty());
  const auto a = sample_collocation(d, 10, 7);
  const auto b = sample_collocation(d, 10, 7);
  REQUIRE(a.size() == 10);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  const auto c = sample_collocation(d, 10, 8);
  CHECK(a[0] != c[0]);
}

TEST_CASE("converged labels stay away from one and increase with the integral") {
  ZubovConfig cfg;
  cfg.domain = Box::centered(1, 2.0);
  double prev = -1.0;
  for (double y : {0.2, 0.6, 1.0, 1.5, 2.0}) {
    const auto lab = label_trajectory(decay_1d(), vec1(y), cfg);
    REQUIRE(lab.converged);
    CHECK(lab.what < 1.0 - 1e-6);
    CHECK(lab.what > prev);
    prev = lab.what;
  }
}

TEST_CASE("Van der Pol label fractions agree with a finer re-simulation") {
  ZubovConfig cfg;
  cfg.domain = Box({Interval{-2.5, 2.5}, Interval{-5.5, 5.5}});
  cfg.rng_seed = 17;
  const auto f = vdp(1.25);
  const auto labels = sample_data(f, cfg, 100, 17);
  ZubovConfig fine = cfg;
  fine.time_step = cfg.time_step / 10.0;
  int agree = 0;
  for (const auto& lab : labels) {
    const auto relabeled = label_trajectory(f, lab.y, fine);
    if (relabeled.converged == lab.converged) ++agree;
  }
  CHECK(agree >= 98);
}

TEST_CASE("zero-epoch training returns the freshly initialized net") {
  ZubovConfig cfg = ZubovConfig::desk(Box::centered(1, 2.0), 5);
  cfg.epochs = 0;
  cfg.n_data = 0;
  const TrainResult r = train(decay_1d(), cfg, 2, 10);
  const Mlp fresh = Mlp::create(1, 2, 10, cfg.rng_seed + 3);
  for (size_t k = 0; k < fresh.layers.size(); ++k)
    for (Eigen::Index i = 0; i < fresh.layers[k].W.size(); ++i)
      CHECK(*(r.net.layers[k].W.data() + i) == *(fresh.layers[k].W.data() + i));
  CHECK(r.log.empty());
}

TEST_CASE("desk-profile training learns the 1-D Zubov solution") {
  ZubovConfig cfg = ZubovConfig::desk(Box::centered(1, 2.0), 42);
  const TrainResult r = train(decay_1d(), cfg, 2, 10);
  REQUIRE(r.log.size() == 5);

  // Loss never blows past 1.5x its running minimum.
  double best = r.log.front().total();
  for (const auto& st : r.log) {
    CHECK(st.total() <= 1.5 * best + 1e-12);
    best = std::min(best, st.total());
  }
  CHECK(r.log.back().residual < 1e-3);

  // Pointwise agreement with the exact solution tanh(0.05 x^2).
  double max_err = 0.0;
  for (int i = 0; i <= 50; ++i) {
    const double x = -2.0 + 4.0 * i / 50.0;
    max_err = std::max(max_err, std::abs(forward(r.net, vec1(x)) - std::tanh(0.05 * x * x)));
  }
  CHECK(max_err < 0.05);

  // Monotone in |x| on [0, 2], with slack for training micro-wiggles.
  double prev = forward(r.net, vec1(0.0));
  for (int i = 1; i <= 50; ++i) {
    const double x = 2.0 * i / 50.0;
    const double w = forward(r.net, vec1(x));
    CHECK(w >= prev - 1e-3);
    prev = std::max(prev, w);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  ZubovConfig cfg = ZubovConfig::desk(Box::centered(1, 2.0), 23);
  cfg.epochs = 2;
  const TrainResult a = train(decay_1d(), cfg, 2, 10);
  const TrainResult b = train(decay_1d(), cfg, 2, 10);
  for (size_t k = 0; k < a.net.layers.size(); ++k) {
    for (Eigen::Index i = 0; i < a.net.layers[k].W.size(); ++i)
      CHECK(*(a.net.layers[k].W.data() + i) == *(b.net.layers[k].W.data() + i));
    for (Eigen::Index i = 0; i < a.net.layers[k].b.size(); ++i)
      CHECK(a.net.layers[k].b[i] == b.net.layers[k].b[i]);
  }
}

TEST_CASE("training log renders as CSV") {
  EpochStats st;
  st.epoch = 1;
  st.residual = 0.5;
  st.boundary = 0.25;
  st.data = 0.125;
  std::vector<EpochStats> log = {st};
  const std::string csv = training_log_csv(log);
  CHECK(csv.find("epoch,residual,boundary,data,total") == 0);
  CHECK(csv.find("1,0.5,0.25,0.125,0.875") != std::string::npos);
}
