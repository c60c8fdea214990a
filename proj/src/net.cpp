#include "vlyap/net.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace vlyap {

namespace {

void check_dim(const Mlp& m, const Eigen::VectorXd& x) {
  if (x.size() != m.input_dim) throw std::invalid_argument("mlp: input dimension mismatch");
}

}  // namespace

int Mlp::parameter_count() const {
  int n = 0;
  for (const auto& l : layers) n += static_cast<int>(l.W.size() + l.b.size());
  return n;
}

Mlp Mlp::create(int input_dim, int depth, int width, std::uint64_t seed) {
  if (input_dim <= 0 || depth < 1 || width < 1) throw std::invalid_argument("mlp: bad architecture");
  Mlp m;
  m.input_dim = input_dim;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  auto init = [&rng](Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> d(-bound, bound);
    Eigen::MatrixXd W(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) W(i, j) = d(rng);
    return W;
  };
  int prev = input_dim;
  for (int k = 0; k < depth; ++k) {
    Mlp::Layer l;
    l.W = init(width, prev, prev);
    l.b = Eigen::VectorXd::Zero(width);
    m.layers.push_back(std::move(l));
    prev = width;
  }
  Mlp::Layer out;
  out.W = init(1, prev, prev);
  out.b = Eigen::VectorXd::Zero(1);
  m.layers.push_back(std::move(out));
  return m;
}

double forward(const Mlp& m, const Eigen::VectorXd& x) {
  check_dim(m, x);
  Eigen::VectorXd a = x;
  const size_t L = m.layers.size();
  for (size_t k = 0; k + 1 < L; ++k)
    a = (m.layers[k].W * a + m.layers[k].b).array().tanh().matrix();
  return (m.layers[L - 1].W * a + m.layers[L - 1].b)(0);
}

Eigen::VectorXd input_gradient(const Mlp& m, const Eigen::VectorXd& x) {
  check_dim(m, x);
  const size_t L = m.layers.size();
  std::vector<Eigen::VectorXd> acts;  // hidden activations
  acts.reserve(L);
  Eigen::VectorXd a = x;
  for (size_t k = 0; k + 1 < L; ++k) {
    a = (m.layers[k].W * a + m.layers[k].b).array().tanh().matrix();
    acts.push_back(a);
  }
  // Backward: g = W_out^T, then through diag(1 - h^2) W_k.
  Eigen::VectorXd g = m.layers[L - 1].W.transpose().col(0);
  for (size_t k = L - 1; k-- > 0;) {
    const Eigen::ArrayXd sech2 = 1.0 - acts[k].array().square();
    g = m.layers[k].W.transpose() * (sech2 * g.array()).matrix();
  }
  return g;
}

GradientTape::GradientTape(const Mlp& m) {
  grads.reserve(m.layers.size());
  for (const auto& l : m.layers)
    grads.push_back({Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()),
                     Eigen::VectorXd::Zero(l.b.size())});
}

void GradientTape::scale(double s) {
  for (auto& g : grads) {
    g.W *= s;
    g.b *= s;
  }
}

void GradientTape::add_scaled(const GradientTape& other, double s) {
  for (size_t k = 0; k < grads.size(); ++k) {
    grads[k].W += s * other.grads[k].W;
    grads[k].b += s * other.grads[k].b;
  }
}

double GradientTape::max_abs() const {
  double m = 0.0;
  for (const auto& g : grads) {
    if (g.W.size()) m = std::max(m, g.W.cwiseAbs().maxCoeff());
    if (g.b.size()) m = std::max(m, g.b.cwiseAbs().maxCoeff());
  }
  return m;
}

// Reverse pass over the tangent-augmented forward program. Forward computes,
// per layer, z = W a + b with a = tanh(z), plus the directional quantities
// zdot = W adot, adot = (1 - a^2) . zdot. Seeding the adjoints of the output
// pair (value, directional) yields exact parameter gradients of any loss
// built from W(x) and grad W(x) . tangent.
void backprop(const Mlp& m, const std::vector<LossPoint>& batch, GradientTape& tape) {
  const size_t L = m.layers.size();
  std::vector<Eigen::VectorXd> a(L), adot(L), zdots(L);  // per hidden layer
  for (const LossPoint& pt : batch) {
    if (pt.seed_value == 0.0 && pt.seed_directional == 0.0) continue;
    check_dim(m, pt.x);
    const bool with_tangent = pt.seed_directional != 0.0;
    Eigen::VectorXd a0 = pt.x;
    Eigen::VectorXd adot0 =
        with_tangent ? pt.tangent : Eigen::VectorXd::Zero(m.input_dim);
    if (with_tangent && pt.tangent.size() != m.input_dim)
      throw std::invalid_argument("mlp: tangent dimension mismatch");

    // Forward with tangents.
    Eigen::VectorXd cur = a0, curdot = adot0;
    for (size_t k = 0; k + 1 < L; ++k) {
      const Eigen::VectorXd z = m.layers[k].W * cur + m.layers[k].b;
      const Eigen::VectorXd zdot = m.layers[k].W * curdot;
      cur = z.array().tanh().matrix();
      curdot = ((1.0 - cur.array().square()) * zdot.array()).matrix();
      a[k] = cur;
      adot[k] = curdot;
      zdots[k] = zdot;
    }

    // Reverse. Output layer is affine: value = W a + b, directional = W adot.
    Eigen::VectorXd abar =
        m.layers[L - 1].W.transpose().col(0) * pt.seed_value;
    Eigen::VectorXd adotbar =
        m.layers[L - 1].W.transpose().col(0) * pt.seed_directional;
    {
      const Eigen::VectorXd& prev = L >= 2 ? a[L - 2] : a0;
      const Eigen::VectorXd& prevdot = L >= 2 ? adot[L - 2] : adot0;
      tape.grads[L - 1].W.row(0) +=
          pt.seed_value * prev.transpose() + pt.seed_directional * prevdot.transpose();
      tape.grads[L - 1].b(0) += pt.seed_value;
    }
    for (size_t k = L - 1; k-- > 0;) {
      const Eigen::ArrayXd h = a[k].array();
      const Eigen::ArrayXd sech2 = 1.0 - h.square();
      const Eigen::ArrayXd zdot = zdots[k].array();
      // a = tanh(z) contributes sech2 .* abar to zbar; the tangent line
      // adot = sech2 .* zdot contributes its z-derivative -2 h sech2 zdot.
      const Eigen::VectorXd zbar =
          (sech2 * abar.array() - 2.0 * h * sech2 * zdot * adotbar.array()).matrix();
      const Eigen::VectorXd zdotbar = (sech2 * adotbar.array()).matrix();
      const Eigen::VectorXd& prev = k >= 1 ? a[k - 1] : a0;
      const Eigen::VectorXd& prevdot = k >= 1 ? adot[k - 1] : adot0;
      tape.grads[k].W += zbar * prev.transpose() + zdotbar * prevdot.transpose();
      tape.grads[k].b += zbar;
      abar = m.layers[k].W.transpose() * zbar;
      adotbar = m.layers[k].W.transpose() * zdotbar;
    }
  }
}

// ---------------------------------------------------------------------------
// Interval propagation

namespace {

std::vector<Interval> affine_enclosure(const Mlp::Layer& l, const std::vector<Interval>& in) {
  std::vector<Interval> out(static_cast<size_t>(l.W.rows()));
  for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
    Interval acc = Interval::point(l.b[i]);
    for (Eigen::Index j = 0; j < l.W.cols(); ++j)
      acc = acc + Interval::point(l.W(i, j)) * in[static_cast<size_t>(j)];
    out[static_cast<size_t>(i)] = acc;
  }
  return out;
}

// Pre-activation enclosures per hidden layer.
std::vector<std::vector<Interval>> preactivations(const Mlp& m, const Box& box) {
  std::vector<std::vector<Interval>> zs;
  std::vector<Interval> cur = box.dims();
  const size_t L = m.layers.size();
  for (size_t k = 0; k + 1 < L; ++k) {
    std::vector<Interval> z = affine_enclosure(m.layers[k], cur);
    zs.push_back(z);
    cur.resize(z.size());
    for (size_t i = 0; i < z.size(); ++i) cur[i] = interval_tanh(z[i]);
  }
  return zs;
}

}  // namespace

Interval interval_forward(const Mlp& m, const Box& box) {
  if (box.dim() != m.input_dim) throw std::invalid_argument("mlp: box dimension mismatch");
  std::vector<Interval> cur = box.dims();
  const size_t L = m.layers.size();
  for (size_t k = 0; k + 1 < L; ++k) {
    std::vector<Interval> z = affine_enclosure(m.layers[k], cur);
    cur.resize(z.size());
    for (size_t i = 0; i < z.size(); ++i) cur[i] = interval_tanh(z[i]);
  }
  return affine_enclosure(m.layers[L - 1], cur)[0];
}

std::vector<Interval> interval_input_gradient(const Mlp& m, const Box& box) {
  if (box.dim() != m.input_dim) throw std::invalid_argument("mlp: box dimension mismatch");
  const size_t L = m.layers.size();
  const auto zs = preactivations(m, box);
  // Backward sweep: g_k = W_k^T (sech2(z_k) .* g_{k+1}).
  std::vector<Interval> g(1, Interval::point(0.0));
  g.resize(static_cast<size_t>(m.layers[L - 1].W.cols()));
  for (size_t j = 0; j < g.size(); ++j)
    g[j] = Interval::point(m.layers[L - 1].W(0, static_cast<Eigen::Index>(j)));
  for (size_t k = L - 1; k-- > 0;) {
    std::vector<Interval> scaled(g.size());
    for (size_t i = 0; i < g.size(); ++i) scaled[i] = interval_sech2(zs[k][i]) * g[i];
    const Eigen::MatrixXd& W = m.layers[k].W;
    std::vector<Interval> next(static_cast<size_t>(W.cols()));
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      Interval acc = Interval::point(0.0);
      for (Eigen::Index i = 0; i < W.rows(); ++i)
        acc = acc + Interval::point(W(i, j)) * scaled[static_cast<size_t>(i)];
      next[static_cast<size_t>(j)] = acc;
    }
    g = std::move(next);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::string hexfloat(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

}  // namespace

void write_checkpoint(const Mlp& m, std::ostream& out) {
  out << "mlp-checkpoint 1\n";
  out << "input_dim " << m.input_dim << "\n";
  out << "seed " << m.seed << "\n";
  out << "layers " << m.layers.size() << "\n";
  for (const auto& l : m.layers) {
    out << "layer " << l.W.rows() << " " << l.W.cols() << "\n";
    for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.W.cols(); ++j)
        out << hexfloat(l.W(i, j)) << (j + 1 < l.W.cols() ? " " : "");
      out << "\n";
    }
    for (Eigen::Index i = 0; i < l.b.size(); ++i)
      out << hexfloat(l.b[i]) << (i + 1 < l.b.size() ? " " : "");
    out << "\n";
  }
}

Mlp read_checkpoint(std::istream& in) {
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "mlp-checkpoint" || version != 1)
    throw CheckpointError("unrecognized checkpoint header");
  Mlp m;
  size_t nlayers = 0;
  std::string key;
  in >> key >> m.input_dim;
  if (key != "input_dim") throw CheckpointError("expected input_dim");
  in >> key >> m.seed;
  if (key != "seed") throw CheckpointError("expected seed");
  in >> key >> nlayers;
  if (key != "layers") throw CheckpointError("expected layers");
  for (size_t k = 0; k < nlayers; ++k) {
    Eigen::Index rows = 0, cols = 0;
    in >> key >> rows >> cols;
    if (key != "layer" || rows <= 0 || cols <= 0) throw CheckpointError("bad layer header");
    Mlp::Layer l;
    l.W.resize(rows, cols);
    l.b.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        std::string t;
        in >> t;
        l.W(i, j) = std::strtod(t.c_str(), nullptr);
      }
    for (Eigen::Index i = 0; i < rows; ++i) {
      std::string t;
      in >> t;
      l.b[i] = std::strtod(t.c_str(), nullptr);
    }
    if (!in) throw CheckpointError("truncated checkpoint");
    m.layers.push_back(std::move(l));
  }
  return m;
}

void save_checkpoint(const Mlp& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path);
  write_checkpoint(m, f);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path);
  return read_checkpoint(f);
}

}  // namespace vlyap
