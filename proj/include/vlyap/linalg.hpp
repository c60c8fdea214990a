#pragma once

#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

namespace vlyap {

struct LyapunovError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// True iff every eigenvalue of M has real part < 0. Decided by the
/// Routh-Hurwitz criterion for n <= 4 and by a Schur (real eigenvalue)
/// bound otherwise; the stability margin is 1e-10.
bool is_hurwitz(const Eigen::MatrixXd& M);

/// Solve P A + A^T P = -Q for symmetric positive definite P via the
/// vectorized Kronecker system. A must be Hurwitz and Q symmetric positive
/// definite; throws LyapunovError otherwise. Residual is checked to
/// 1e-9 * ||Q||_F.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

/// Extreme eigenvalues (min, max) of a symmetric matrix. Inputs with
/// asymmetry up to 1e-12 are symmetrized first.
std::pair<double, double> sym_eig_bounds(const Eigen::MatrixXd& M);

/// True iff M is Metzler: off-diagonal entries >= -tol.
bool is_metzler(const Eigen::MatrixXd& M, double tol = 1e-12);

/// For a Metzler gain matrix L, returns p = (-L)^{-1} * 1 when -L is a
/// nonsingular M-matrix (then p > 0 and L p = -1 < 0 componentwise);
/// nullopt otherwise.
std::optional<Eigen::VectorXd> find_positive_p(const Eigen::MatrixXd& L);

/// e^{M t} by scaling-and-squaring Pade approximation.
Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M, double t);

}  // namespace vlyap
