#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vlyap/linalg.hpp"
#include "vlyap/ode.hpp"

using namespace vlyap;

namespace {

// Independent 2x2 Lyapunov oracle: Cramer's rule on the 3x3 system in
// (p11, p12, p22) for P A + A^T P = -Q.
Eigen::Matrix2d lyapunov_2x2_oracle(const Eigen::Matrix2d& A, const Eigen::Matrix2d& Q) {
  const double a = A(0, 0), b = A(0, 1), c = A(1, 0), d = A(1, 1);
  Eigen::Matrix3d M;
  M << 2 * a, 2 * c, 0,  //
      b, a + d, c,       //
      0, 2 * b, 2 * d;
  Eigen::Vector3d rhs(-Q(0, 0), -Q(0, 1), -Q(1, 1));
  const double det = M.determinant();
  Eigen::Vector3d sol;
  for (int i = 0; i < 3; ++i) {
    Eigen::Matrix3d Mi = M;
    Mi.col(i) = rhs;
    sol[i] = Mi.determinant() / det;
  }
  Eigen::Matrix2d P;
  P << sol[0], sol[1], sol[1], sol[2];
  return P;
}

}  // namespace

TEST_CASE("scalar Lyapunov equation") {
  Eigen::MatrixXd A(1, 1), Q(1, 1);
  A << -1.0;
  Q << 1.0;
  const Eigen::MatrixXd P = solve_lyapunov(A, Q);
  CHECK(P(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("Van der Pol linearization Lyapunov solve matches the Cramer oracle") {
  Eigen::MatrixXd A(2, 2);
  A << 0.0, -1.0, 1.0, -1.25;
  const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd P = solve_lyapunov(A, Q);
  CHECK((P * A + A.transpose() * P + Q).norm() < 1e-9 * Q.norm());
  const Eigen::Matrix2d Pref = lyapunov_2x2_oracle(A, Q);
  CHECK((P - Pref).norm() < 1e-9);
}

TEST_CASE("Lyapunov solve rejects a non-Hurwitz A") {
  Eigen::MatrixXd A(2, 2);
  A << 0.0, 1.0, -1.0, 0.0;  // purely imaginary spectrum
  CHECK_THROWS_AS(solve_lyapunov(A, Eigen::MatrixXd::Identity(2, 2)), LyapunovError);
}

TEST_CASE("Lyapunov residual on random Hurwitz systems") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6);
    const Eigen::MatrixXd A = vlyap::testing::random_hurwitz(n, rng);
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd P = solve_lyapunov(A, Q);
    CHECK((P * A + A.transpose() * P + Q).norm() < 1e-9 * Q.norm());
    CHECK((P - P.transpose()).norm() < 1e-12);
  }
}

TEST_CASE("symmetric eigenvalue bounds") {
  CHECK(sym_eig_bounds(Eigen::MatrixXd::Identity(2, 2)) == std::pair{1.0, 1.0});
  Eigen::MatrixXd D = Eigen::Vector2d(2.0, 5.0).asDiagonal();
  const auto [lo, hi] = sym_eig_bounds(D);
  CHECK(lo == doctest::Approx(2.0));
  CHECK(hi == doctest::Approx(5.0));

  // P from the Van der Pol solve, against characteristic-polynomial roots.
  Eigen::MatrixXd A(2, 2);
  A << 0.0, -1.0, 1.0, -1.25;
  const Eigen::MatrixXd P = solve_lyapunov(A, Eigen::MatrixXd::Identity(2, 2));
  const double tr = P.trace(), det = P.determinant();
  const double disc = std::sqrt(tr * tr - 4.0 * det);
  const auto [pmin, pmax] = sym_eig_bounds(P);
  CHECK(pmin == doctest::Approx(0.5 * (tr - disc)).epsilon(1e-8));
  CHECK(pmax == doctest::Approx(0.5 * (tr + disc)).epsilon(1e-8));
}

TEST_CASE("Hurwitz predicate") {
  Eigen::MatrixXd M(2, 2);
  M << -1.0, 0.0, 0.0, -2.0;
  CHECK(is_hurwitz(M));
  M << 0.0, -1.0, 1.0, -0.62;  // trace < 0, det > 0
  CHECK(is_hurwitz(M));
  CHECK(!is_hurwitz(Eigen::MatrixXd::Zero(3, 3)));
  M << 0.0, 1.0, -1.0, 0.0;
  CHECK(!is_hurwitz(M));
}

TEST_CASE("Routh-Hurwitz route agrees with the eigenvalue route") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> d(-1.5, 1.5);
  int compared = 0;
  while (compared < 500) {
    const int n = 1 + static_cast<int>(rng() % 4);
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = d(rng);
    Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
    const double max_re = es.eigenvalues().real().maxCoeff();
    if (std::abs(max_re) < 1e-6) continue;  // skip margin cases
    CHECK(is_hurwitz(M) == (max_re < 0.0));
    ++compared;
  }
}

TEST_CASE("positive p construction") {
  const Eigen::MatrixXd L = -Eigen::MatrixXd::Identity(2, 2);
  const auto p = find_positive_p(L);
  REQUIRE(p.has_value());
  CHECK((*p - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-12);
  CHECK(((L * *p).array() < 0.0).all());

  Eigen::MatrixXd L2(2, 2);
  L2 << -2.0, 1.0, 1.0, -2.0;
  const auto p2 = find_positive_p(L2);
  REQUIRE(p2.has_value());
  // (-L2)^{-1} * 1 = (1, 1) by direct 2x2 inversion.
  CHECK((*p2 - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-12);

  CHECK(!find_positive_p(Eigen::MatrixXd::Identity(2, 2)).has_value());
}

TEST_CASE("M-matrix condition equivalence on random Metzler matrices") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 500; ++trial) {
    const int l = 1 + static_cast<int>(rng() % 6);
    const Eigen::MatrixXd M = vlyap::testing::random_metzler(l, rng);
    const bool has_p = find_positive_p(M).has_value();
    const bool hurwitz = is_hurwitz(M);
    CAPTURE(M);
    CHECK(has_p == hurwitz);
  }
}

TEST_CASE("matrix exponential basics") {
  CHECK((matrix_exponential(Eigen::MatrixXd::Zero(3, 3), 1.0) -
         Eigen::MatrixXd::Identity(3, 3))
            .norm() < 1e-14);
  Eigen::MatrixXd D = Eigen::Vector2d(-1.0, -2.0).asDiagonal();
  const Eigen::MatrixXd E = matrix_exponential(D, 1.0);
  CHECK(E(0, 0) == doctest::Approx(std::exp(-1.0)));
  CHECK(E(1, 1) == doctest::Approx(std::exp(-2.0)));
  CHECK(std::abs(E(0, 1)) < 1e-15);
}

TEST_CASE("Metzler exponential is entrywise nonnegative") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd M = vlyap::testing::random_metzler(4, rng);
    for (double t : {0.1, 1.0, 10.0}) {
      const Eigen::MatrixXd E = matrix_exponential(M, t);
      CHECK(E.minCoeff() >= -1e-12);
      CHECK(E.diagonal().minCoeff() > 0.0);
      // Cross-route: e^{Mt} = e^{(M+bI)t} e^{-bt} with M+bI nonnegative.
      const double b = std::max(0.0, -M.diagonal().minCoeff());
      const Eigen::MatrixXd B = M + b * Eigen::MatrixXd::Identity(4, 4);
      CHECK(B.minCoeff() >= 0.0);
      const Eigen::MatrixXd E2 = matrix_exponential(B, t) * std::exp(-b * t);
      CHECK((E - E2).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, E.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("comparison lemma bound for differential inequalities") {
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int l = 2 + static_cast<int>(rng() % 3);
    const Eigen::MatrixXd L = vlyap::testing::random_metzler(l, rng);
    Eigen::VectorXd v0(l);
    for (int i = 0; i < l; ++i) v0[i] = 0.1 + u01(rng);
    // Piecewise-constant nonpositive forcing, switching at t = 5.
    Eigen::VectorXd u1(l), u2(l);
    for (int i = 0; i < l; ++i) {
      u1[i] = -u01(rng);
      u2[i] = -u01(rng);
    }
    const auto field = [&](double t) {
      return [&, t](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return L * v + (t < 5.0 ? u1 : u2);
      };
    };
    Eigen::VectorXd v = v0;
    const double h = 0.01;
    for (double t = 0.0; t < 10.0 - 1e-12; t += h) {
      v = rk4_step(field(t), v, h);
      const Eigen::VectorXd bound = matrix_exponential(L, t + h) * v0;
      for (int i = 0; i < l; ++i) CHECK(v[i] <= bound[i] + 1e-8);
    }
  }
}
