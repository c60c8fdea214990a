#include "vlyap/linalg.hpp"

#include <cmath>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace vlyap {

namespace {

constexpr double kMargin = 1e-10;

// Characteristic polynomial s^n + c[0] s^{n-1} + ... + c[n-1] by the
// Faddeev-LeVerrier recurrence.
Eigen::VectorXd char_poly(const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.rows();
  Eigen::VectorXd c(n);
  Eigen::MatrixXd Mk = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    const Eigen::MatrixXd AM = A * Mk;
    c[k - 1] = -AM.trace() / static_cast<double>(k);
    Mk = AM + c[k - 1] * Eigen::MatrixXd::Identity(n, n);
  }
  return c;
}

bool routh_hurwitz(const Eigen::VectorXd& a) {
  // Poly s^n + a1 s^{n-1} + ... + an with a = (a1..an); all roots in the
  // open left half plane iff the classical minor conditions hold.
  const Eigen::Index n = a.size();
  const double m = kMargin;
  switch (n) {
    case 1: return a[0] > m;
    case 2: return a[0] > m && a[1] > m;
    case 3: return a[0] > m && a[2] > m && a[0] * a[1] - a[2] > m;
    case 4:
      return a[0] > m && a[2] > m && a[3] > m &&
             a[0] * a[1] * a[2] - a[2] * a[2] - a[0] * a[0] * a[3] > m;
    default: return false;
  }
}

}  // namespace

bool is_hurwitz(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("is_hurwitz: matrix not square");
  if (!M.allFinite()) return false;
  const Eigen::Index n = M.rows();
  if (n <= 4) return routh_hurwitz(char_poly(M));
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, /*computeEigenvectors=*/false);
  return es.eigenvalues().real().maxCoeff() < -kMargin;
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("solve_lyapunov: shape mismatch");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, Q.norm()))
    throw LyapunovError("solve_lyapunov: Q not symmetric");
  {
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (Q + Q.transpose()));
    if (llt.info() != Eigen::Success) throw LyapunovError("solve_lyapunov: Q not positive definite");
  }
  if (!is_hurwitz(A)) throw LyapunovError("solve_lyapunov: A is not Hurwitz");

  // vec(PA + A^T P) = (A^T kron I + I kron A^T) vec(P), column-major vec.
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd K =
      Eigen::kroneckerProduct(A.transpose(), I) + Eigen::kroneckerProduct(I, A.transpose());
  const Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(Q.data(), n * n);
  const Eigen::VectorXd p = K.fullPivLu().solve(-q);
  Eigen::MatrixXd P = Eigen::Map<const Eigen::MatrixXd>(p.data(), n, n);
  P = 0.5 * (P + P.transpose()).eval();

  const double residual = (P * A + A.transpose() * P + Q).norm();
  if (!(residual < 1e-9 * Q.norm()))
    throw LyapunovError("solve_lyapunov: residual too large");
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) throw LyapunovError("solve_lyapunov: P not positive definite");
  return P;
}

std::pair<double, double> sym_eig_bounds(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("sym_eig_bounds: matrix not square");
  const Eigen::MatrixXd S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("sym_eig_bounds: eigensolver failed");
  const auto& ev = es.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

bool is_metzler(const Eigen::MatrixXd& M, double tol) {
  if (M.rows() != M.cols()) return false;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      if (i != j && M(i, j) < -tol) return false;
  return true;
}

std::optional<Eigen::VectorXd> find_positive_p(const Eigen::MatrixXd& L) {
  if (!is_metzler(L)) throw std::invalid_argument("find_positive_p: matrix not Metzler");
  const Eigen::Index l = L.rows();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(-L);
  if (!lu.isInvertible()) return std::nullopt;
  const Eigen::VectorXd p = lu.solve(Eigen::VectorXd::Ones(l));
  if (!(p.array() > 0.0).all()) return std::nullopt;
  if (!((L * p).array() < 0.0).all()) return std::nullopt;
  return p;
}

Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M, double t) {
  if (M.rows() != M.cols()) throw std::invalid_argument("matrix_exponential: matrix not square");
  if (t < 0.0) throw std::invalid_argument("matrix_exponential: t must be >= 0");
  return (t * M).exp();
}

}  // namespace vlyap
