#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vlyap/expr.hpp"
#include "vlyap/interval.hpp"
#include "vlyap/net.hpp"

namespace vlyap {

/// Which positive-definite rate fixes the PDE: psi(x) = alpha |x|^2, or the
/// default alpha (1 + W(x)) |x|^2 corresponding to the tanh(alpha s)
/// transform of a classical Lyapunov function.
enum class PsiKind { Linear, Quadratic };

struct ZubovConfig {
  double alpha = 0.1;
  Box domain;
  int n_collocation = 300000;
  int n_data = 3000;
  int batch_size = 32;
  int epochs = 20;
  double learning_rate = 0.001;
  // When positive, the step size decays geometrically per epoch, ending at
  // this value; a cooled final phase settles the derivative field.
  double final_learning_rate = 0.0;
  PsiKind psi = PsiKind::Quadratic;
  // Near-origin envelope rates beta(c1 |x|^2) <= W <= beta(c2 |x|^2);
  // values <= 0 mean "derive from the quadratic certificate" (eigenvalue
  // bounds of the Lyapunov-equation solution with Q = I).
  double c1 = -1.0;
  double c2 = -1.0;
  std::uint64_t rng_seed = 0;
  // Trajectory labeling.
  double horizon = 50.0;
  double time_step = 0.01;
  double converge_tol = 1e-3;
  double safety_factor = 2.0;  // safety box = factor * domain
  // Fraction of the domain, around the origin, sampled for the envelope loss.
  double near_origin_fraction = 0.25;

  /// Scaled-down profile for desk-size runs (small sample counts, a larger
  /// step size so the short budget still converges).
  static ZubovConfig desk(Box domain, std::uint64_t seed);
};

struct TrainError : std::runtime_error {
  TrainError(const std::string& msg, long step_) : std::runtime_error(msg), step(step_) {}
  long step;
};

/// Forward-integration label for a data point: converged trajectories carry
/// the transformed cost-to-origin, everything else saturates at 1.
struct TrajectoryLabel {
  Eigen::VectorXd y;
  double what = 1.0;  // target W value in [0, 1]
  bool converged = false;
};

/// Mean squared PDE residual (grad W . f + psi (1 - W))^2 over the points.
double residual_loss(const Mlp& m, const std::vector<Expr>& f, const std::vector<Eigen::VectorXd>& points,
                     double alpha, PsiKind psi = PsiKind::Quadratic);

/// Mean hinge penalty for the near-origin envelope
/// beta(c1 |x|^2) <= W(x) <= beta(c2 |x|^2), beta(s) = tanh(alpha s).
double boundary_loss(const Mlp& m, const std::vector<Eigen::VectorXd>& points, double alpha,
                     double c1, double c2);

/// RK4-integrate from y over [0, horizon], accumulating the running cost
/// integral |phi|^2 dt with the same quadrature (augmented state). Labels
/// W_hat = tanh(alpha * cost) when the endpoint converged, else 1.
TrajectoryLabel label_trajectory(const std::vector<Expr>& f, const Eigen::VectorXd& y,
                                 const ZubovConfig& cfg);

std::vector<Eigen::VectorXd> sample_collocation(const Box& domain, int n, std::uint64_t seed);
std::vector<TrajectoryLabel> sample_data(const std::vector<Expr>& f, const ZubovConfig& cfg,
                                         int n, std::uint64_t seed);

struct EpochStats {
  int epoch = 0;
  double residual = 0.0;
  double boundary = 0.0;
  double data = 0.0;
  double total() const { return residual + boundary + data; }
};

struct TrainResult {
  Mlp net;
  std::vector<EpochStats> log;
  double c1 = 0.0;  // envelope rates actually used
  double c2 = 0.0;
};

/// Train a neural solution of the Zubov PDE for x' = f(x) on cfg.domain by
/// Adam on the summed residual + envelope + data losses. Deterministic for a
/// fixed config. Throws TrainError with the step index if the loss diverges.
TrainResult train(const std::vector<Expr>& f, const ZubovConfig& cfg, int depth, int width);

/// Per-epoch CSV rows: epoch,residual,boundary,data,total.
std::string training_log_csv(const std::vector<EpochStats>& log);

}  // namespace vlyap
