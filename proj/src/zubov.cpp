#include "vlyap/zubov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "vlyap/linalg.hpp"
#include "vlyap/ode.hpp"

namespace vlyap {

namespace {

Eigen::VectorXd eval_field(const std::vector<Expr>& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(f.size()));
  for (size_t i = 0; i < f.size(); ++i) v[static_cast<Eigen::Index>(i)] = eval(f[i], x);
  return v;
}

struct Residual {
  double r;
  double dr_dw;  // partial of r in W(x)
};

Residual residual_at(double w, double u, double alpha, double sqnorm, PsiKind psi) {
  if (psi == PsiKind::Quadratic) {
    // psi (1 - W) = alpha (1 + W)(1 - W) |x|^2 = alpha (1 - W^2) |x|^2.
    return {u + alpha * sqnorm * (1.0 - w * w), -2.0 * alpha * sqnorm * w};
  }
  return {u + alpha * sqnorm * (1.0 - w), -alpha * sqnorm};
}

struct Hinge {
  double penalty;
  double dp_dw;
};

Hinge hinge_at(double w, double sqnorm, double alpha, double c1, double c2) {
  const double lb = std::tanh(alpha * c1 * sqnorm);
  const double ub = std::tanh(alpha * c2 * sqnorm);
  const double below = std::max(0.0, lb - w);
  const double above = std::max(0.0, w - ub);
  return {below * below + above * above, -2.0 * below + 2.0 * above};
}

}  // namespace

ZubovConfig ZubovConfig::desk(Box domain, std::uint64_t seed) {
  ZubovConfig cfg;
  cfg.domain = std::move(domain);
  cfg.n_collocation = 3000;
  cfg.n_data = 200;
  cfg.epochs = 5;
  cfg.learning_rate = 0.01;
  cfg.rng_seed = seed;
  return cfg;
}

double residual_loss(const Mlp& m, const std::vector<Expr>& f,
                     const std::vector<Eigen::VectorXd>& points, double alpha, PsiKind psi) {
  if (points.empty()) return 0.0;
  double total = 0.0;
  for (const auto& x : points) {
    const double w = forward(m, x);
    const double u = input_gradient(m, x).dot(eval_field(f, x));
    total += std::pow(residual_at(w, u, alpha, x.squaredNorm(), psi).r, 2);
  }
  return total / static_cast<double>(points.size());
}

double boundary_loss(const Mlp& m, const std::vector<Eigen::VectorXd>& points, double alpha,
                     double c1, double c2) {
  if (points.empty()) return 0.0;
  double total = 0.0;
  for (const auto& x : points)
    total += hinge_at(forward(m, x), x.squaredNorm(), alpha, c1, c2).penalty;
  return total / static_cast<double>(points.size());
}

TrajectoryLabel label_trajectory(const std::vector<Expr>& f, const Eigen::VectorXd& y,
                                 const ZubovConfig& cfg) {
  TrajectoryLabel label;
  label.y = y;
  const int n = static_cast<int>(f.size());
  if (y.size() != n) throw std::invalid_argument("label_trajectory: state dimension mismatch");

  Box safety = cfg.domain;
  for (int i = 0; i < safety.dim(); ++i) {
    safety[i].lo *= cfg.safety_factor;
    safety[i].hi *= cfg.safety_factor;
  }

  // Augmented state (x, s) with s' = |x|^2, integrated by the same RK4.
  const auto field = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd out(n + 1);
    const Eigen::VectorXd x = z.head(n);
    out.head(n) = eval_field(f, x);
    out[n] = x.squaredNorm();
    return out;
  };

  Eigen::VectorXd z(n + 1);
  z.head(n) = y;
  z[n] = 0.0;
  bool escaped = false;
  double t = 0.0;
  const long steps = static_cast<long>(std::ceil(cfg.horizon / cfg.time_step));
  for (long k = 0; k < steps; ++k) {
    const double h = std::min(cfg.time_step, cfg.horizon - t);
    try {
      z = rk4_step(field, z, h);
    } catch (const EvalError&) {
      escaped = true;
      break;
    }
    t += h;
    if (!z.allFinite() || !safety.contains(z.head(n))) {
      escaped = true;
      break;
    }
    if (z.head(n).squaredNorm() < 1e-20) break;  // converged; tail mass negligible
  }

  if (!escaped && z.head(n).norm() < cfg.converge_tol) {
    label.converged = true;
    label.what = std::tanh(cfg.alpha * z[n]);
  } else {
    label.converged = false;
    label.what = 1.0;
  }
  return label;
}

std::vector<Eigen::VectorXd> sample_collocation(const Box& domain, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(static_cast<size_t>(std::max(0, n)));
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd x(domain.dim());
    for (int i = 0; i < domain.dim(); ++i) {
      std::uniform_real_distribution<double> d(domain[i].lo, domain[i].hi);
      x[i] = d(rng);
    }
    pts.push_back(std::move(x));
  }
  return pts;
}

std::vector<TrajectoryLabel> sample_data(const std::vector<Expr>& f, const ZubovConfig& cfg,
                                         int n, std::uint64_t seed) {
  // One point in five is drawn near the origin: the labels there pin the
  // function to zero where every sub-level set must close up.
  const int n_near = n / 5;
  auto points = sample_collocation(cfg.domain, n - n_near, seed);
  Box near = cfg.domain;
  for (int i = 0; i < near.dim(); ++i) {
    near[i].lo *= cfg.near_origin_fraction;
    near[i].hi *= cfg.near_origin_fraction;
  }
  for (auto& y : sample_collocation(near, n_near, seed + 1)) points.push_back(std::move(y));
  std::vector<TrajectoryLabel> labels;
  labels.reserve(points.size());
  for (const auto& y : points) labels.push_back(label_trajectory(f, y, cfg));
  return labels;
}

namespace {

struct Adam {
  GradientTape m1, m2;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;

  explicit Adam(const Mlp& net) : m1(net), m2(net) {}

  void step(Mlp& net, const GradientTape& g, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto update = [&]<typename T>(T& theta, const T& grad, T& m, T& v) {
      m = beta1 * m + (1.0 - beta1) * grad;
      v = (beta2 * v.array() + (1.0 - beta2) * grad.array().square()).matrix();
      theta.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    };
    for (size_t k = 0; k < net.layers.size(); ++k) {
      update(net.layers[k].W, g.grads[k].W, m1.grads[k].W, m2.grads[k].W);
      update(net.layers[k].b, g.grads[k].b, m1.grads[k].b, m2.grads[k].b);
    }
  }
};

}  // namespace

TrainResult train(const std::vector<Expr>& f, const ZubovConfig& cfg, int depth, int width) {
  const int dim = cfg.domain.dim();
  for (const auto& e : f)
    if (e.arity() > dim) throw std::invalid_argument("train: dynamics arity exceeds domain dimension");
  if (static_cast<int>(f.size()) != dim)
    throw std::invalid_argument("train: dynamics component count must equal domain dimension");

  TrainResult result;

  // Envelope rates from the quadratic certificate when not pinned.
  double c1 = cfg.c1, c2 = cfg.c2;
  if (c1 <= 0.0 || c2 <= 0.0) {
    Eigen::MatrixXd A(dim, dim);
    Eigen::VectorXd origin = Eigen::VectorXd::Zero(dim);
    const auto J = jacobian(f);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        A(i, j) = static_cast<int>(J[static_cast<size_t>(i)].size()) > j
                      ? eval(J[static_cast<size_t>(i)][static_cast<size_t>(j)], origin)
                      : 0.0;
    const Eigen::MatrixXd P = solve_lyapunov(A, Eigen::MatrixXd::Identity(dim, dim));
    const auto [pmin, pmax] = sym_eig_bounds(P);
    if (c1 <= 0.0) c1 = pmin;
    if (c2 <= 0.0) c2 = pmax;
  }
  if (c1 > c2) throw std::invalid_argument("train: c1 must not exceed c2");
  result.c1 = c1;
  result.c2 = c2;

  const auto collocation = sample_collocation(cfg.domain, cfg.n_collocation, cfg.rng_seed);
  Box near = cfg.domain;
  for (int i = 0; i < near.dim(); ++i) {
    near[i].lo *= cfg.near_origin_fraction;
    near[i].hi *= cfg.near_origin_fraction;
  }
  const int n_near = std::max(cfg.batch_size * 8, 256);
  const auto near_points = sample_collocation(near, n_near, cfg.rng_seed + 1);
  const auto data = sample_data(f, cfg, cfg.n_data, cfg.rng_seed + 2);

  Mlp net = Mlp::create(dim, depth, width, cfg.rng_seed + 3);
  if (cfg.epochs <= 0 || cfg.n_collocation <= 0) {
    result.net = std::move(net);
    return result;
  }

  Adam adam(net);
  std::mt19937_64 shuffle_rng(cfg.rng_seed + 4);
  std::vector<size_t> order(collocation.size());
  std::iota(order.begin(), order.end(), size_t{0});

  long step_index = 0;
  size_t data_cursor = 0, near_cursor = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate;
    if (cfg.final_learning_rate > 0.0 && cfg.epochs > 1)
      lr = cfg.learning_rate * std::pow(cfg.final_learning_rate / cfg.learning_rate,
                                        static_cast<double>(epoch - 1) /
                                            static_cast<double>(cfg.epochs - 1));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum_r = 0.0, sum_b = 0.0, sum_d = 0.0;
    long batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const double nb = static_cast<double>(end - start);
      GradientTape tape(net);
      double lr_ = 0.0, lb_ = 0.0, ld_ = 0.0;

      for (size_t idx = start; idx < end; ++idx) {
        const Eigen::VectorXd& x = collocation[order[idx]];
        const double w = forward(net, x);
        const Eigen::VectorXd fx = eval_field(f, x);
        const double u = input_gradient(net, x).dot(fx);
        const auto res = residual_at(w, u, cfg.alpha, x.squaredNorm(), cfg.psi);
        lr_ += res.r * res.r / nb;
        backprop(net, {{x, fx, 2.0 * res.r * res.dr_dw / nb, 2.0 * res.r / nb}}, tape);

        const Eigen::VectorXd& nx = near_points[near_cursor];
        near_cursor = (near_cursor + 1) % near_points.size();
        const double nw = forward(net, nx);
        const auto hp = hinge_at(nw, nx.squaredNorm(), cfg.alpha, c1, c2);
        lb_ += hp.penalty / nb;
        if (hp.dp_dw != 0.0) backprop(net, {{nx, {}, hp.dp_dw / nb, 0.0}}, tape);

        if (!data.empty()) {
          const TrajectoryLabel& lab = data[data_cursor];
          data_cursor = (data_cursor + 1) % data.size();
          const double dw = forward(net, lab.y);
          ld_ += (dw - lab.what) * (dw - lab.what) / nb;
          backprop(net, {{lab.y, {}, 2.0 * (dw - lab.what) / nb, 0.0}}, tape);
        }
      }

      const double batch_total = lr_ + lb_ + ld_;
      if (!std::isfinite(batch_total) || !std::isfinite(tape.max_abs()))
        throw TrainError("training loss diverged", step_index);
      adam.step(net, tape, lr);
      ++step_index;
      sum_r += lr_;
      sum_b += lb_;
      sum_d += ld_;
      ++batches;
    }
    EpochStats st;
    st.epoch = epoch;
    st.residual = sum_r / static_cast<double>(batches);
    st.boundary = sum_b / static_cast<double>(batches);
    st.data = sum_d / static_cast<double>(batches);
    result.log.push_back(st);
  }

  result.net = std::move(net);
  return result;
}

std::string training_log_csv(const std::vector<EpochStats>& log) {
  std::ostringstream out;
  out << "epoch,residual,boundary,data,total\n";
  out.precision(17);
  for (const auto& st : log)
    out << st.epoch << "," << st.residual << "," << st.boundary << "," << st.data << ","
        << st.total() << "\n";
  return out.str();
}

}  // namespace vlyap
