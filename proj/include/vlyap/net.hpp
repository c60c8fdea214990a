#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vlyap/interval.hpp"

namespace vlyap {

/// Scalar-output feedforward network: tanh hidden layers, affine output.
/// Immutable once trained; safe to share across verifier workers.
struct Mlp {
  struct Layer {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;
  };

  std::vector<Layer> layers;  // hidden layers..., output layer (rows == 1)
  int input_dim = 0;
  std::uint64_t seed = 0;     // recorded initialization seed

  int depth() const { return static_cast<int>(layers.size()) - 1; }  // hidden layers
  int width() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.rows()); }
  int parameter_count() const;

  /// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  static Mlp create(int input_dim, int depth, int width, std::uint64_t seed);
};

double forward(const Mlp& m, const Eigen::VectorXd& x);

/// Analytic gradient of forward() with respect to the input.
Eigen::VectorXd input_gradient(const Mlp& m, const Eigen::VectorXd& x);

/// Per-parameter gradient accumulator, shape-congruent with an Mlp.
struct GradientTape {
  std::vector<Mlp::Layer> grads;

  explicit GradientTape(const Mlp& m);
  void scale(double s);
  void add_scaled(const GradientTape& other, double s);
  double max_abs() const;
};

/// One batch element for backprop: at point x, the loss depends on the pair
/// (value, directional) = (W(x), grad W(x) . tangent), with the given
/// adjoint seeds d loss / d value and d loss / d directional.
struct LossPoint {
  Eigen::VectorXd x;
  Eigen::VectorXd tangent;   // may be empty when seed_directional == 0
  double seed_value = 0.0;
  double seed_directional = 0.0;
};

/// Accumulate parameter gradients of the scalar batch loss into `tape`.
/// Handles losses of both W(x) and grad W(x) . tangent exactly
/// (forward-tangent pass differentiated in reverse).
void backprop(const Mlp& m, const std::vector<LossPoint>& batch, GradientTape& tape);

/// Sound enclosure of {forward(m, x) : x in box}.
Interval interval_forward(const Mlp& m, const Box& box);

/// Sound per-component enclosure of the input gradient over the box.
std::vector<Interval> interval_input_gradient(const Mlp& m, const Box& box);

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Versioned text checkpoint with hexfloat weights; round trips bit-exactly.
void save_checkpoint(const Mlp& m, const std::string& path);
Mlp load_checkpoint(const std::string& path);
void write_checkpoint(const Mlp& m, std::ostream& out);
Mlp read_checkpoint(std::istream& in);

}  // namespace vlyap
