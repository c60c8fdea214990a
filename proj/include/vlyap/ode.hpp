#pragma once

#include <functional>

#include <Eigen/Core>

namespace vlyap {

using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// One classical RK4 step of x' = f(x).
inline Eigen::VectorXd rk4_step(const VectorField& f, const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd k1 = f(x);
  const Eigen::VectorXd k2 = f(x + 0.5 * h * k1);
  const Eigen::VectorXd k3 = f(x + 0.5 * h * k2);
  const Eigen::VectorXd k4 = f(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrate x' = f(x) from x0 over [0, T] with fixed step h; `observe`,
/// when given, is called after every step and may stop the integration by
/// returning false. Returns the final state.
inline Eigen::VectorXd rk4_integrate(
    const VectorField& f, const Eigen::VectorXd& x0, double T, double h,
    const std::function<bool(double /*t*/, const Eigen::VectorXd&)>& observe = {}) {
  Eigen::VectorXd x = x0;
  double t = 0.0;
  while (t < T - 1e-15) {
    const double step = std::min(h, T - t);
    x = rk4_step(f, x, step);
    t += step;
    if (observe && !observe(t, x)) break;
  }
  return x;
}

}  // namespace vlyap
