#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vlyap/expr.hpp"
#include "vlyap/net.hpp"
#include "vlyap/verify.hpp"

namespace vlyap {

/// One subsystem: isolated dynamics over its own coordinates, plus the
/// training/verification domain of its Lyapunov functions.
struct Subsystem {
  int dim = 0;
  std::vector<Expr> f;  // dim components, arity <= dim
  Box domain;
};

/// Coupling term G_ij feeding subsystem i from subsystem j; components have
/// arity n_i + n_j over the concatenated coordinates (x_i, x_j).
struct Coupling {
  int i = 0;
  int j = 0;
  std::vector<Expr> g;  // n_i components
};

struct PipelineError : std::runtime_error {
  PipelineError(const std::string& msg, int subsystem_ = -1)
      : std::runtime_error(msg), subsystem(subsystem_) {}
  int subsystem;
};

/// The interconnected system x_i' = f_i(x_i) + sum_j G_ij(x_i, x_j).
/// Construction verifies f_i(0) = 0 and G_ij(0, 0) = 0 numerically.
class SystemNetwork {
 public:
  SystemNetwork(std::vector<Subsystem> subsystems, std::vector<Coupling> couplings);

  int size() const { return static_cast<int>(subsystems_.size()); }
  int total_dim() const { return total_dim_; }
  int offset(int i) const { return offsets_[static_cast<size_t>(i)]; }
  const Subsystem& subsystem(int i) const { return subsystems_[static_cast<size_t>(i)]; }
  const std::vector<Coupling>& couplings() const { return couplings_; }
  std::vector<const Coupling*> in_edges(int i) const;

  /// Full coupled vector field on the stacked state.
  Eigen::VectorXd field(const Eigen::VectorXd& x) const;

  /// The same network with every coupling removed.
  SystemNetwork decoupled() const;
  /// Single-subsystem network around subsystem i.
  SystemNetwork isolated(int i) const;

 private:
  std::vector<Subsystem> subsystems_;
  std::vector<Coupling> couplings_;
  std::vector<int> offsets_;
  int total_dim_ = 0;
};

using LevelVector = Eigen::VectorXd;

/// Per-subsystem scalar Lyapunov function, either the quadratic x^T P x or a
/// trained network, with the query-building hooks the verifier needs.
class SubsystemLyapunov {
 public:
  static SubsystemLyapunov quadratic(Eigen::MatrixXd P, Box domain);
  static SubsystemLyapunov neural(std::shared_ptr<const Mlp> net, Box domain);

  bool is_neural() const { return net_ != nullptr; }
  const Box& domain() const { return domain_; }
  const Eigen::MatrixXd& P() const { return P_; }
  const std::shared_ptr<const Mlp>& net() const { return net_; }

  double value(const Eigen::VectorXd& x) const;
  /// V(x_sub) as a goal/constraint over a larger coordinate vector.
  ScalarFnPtr fn(int offset, int total_arity) const;
  /// grad V(x_sub) . field(x); field components span the full vector.
  ScalarFnPtr derivative_fn(int offset, int total_arity, const std::vector<Expr>& field) const;
  /// A box guaranteed to contain {V <= level} within the validity domain.
  Box region_box(double level) const;
  /// Neural sub-level sets must stay clear of the domain boundary.
  bool needs_shell_check() const { return is_neural(); }

  /// A copy whose region boxes are additionally clipped to `outer`. Only
  /// sound while the levels in play keep {V <= level} inside `outer` (e.g.
  /// below a certified containment level).
  SubsystemLyapunov restricted_to(const Box& outer) const;

 private:
  Eigen::MatrixXd P_;
  std::shared_ptr<const Mlp> net_;
  Box domain_;
  Box outer_;           // empty = unrestricted
  double p_min_ = 0.0;  // smallest eigenvalue of P (quadratic case)
};

using VectorLyapunov = std::vector<SubsystemLyapunov>;

/// Quadratic certificate of Step 1: Lyapunov data, certified gain bounds R,
/// the Metzler gain matrix, the gain-validity levels c and the certified
/// levels p with Lambda p < 0 and p <= c.
struct QuadCertificate {
  std::vector<Eigen::MatrixXd> A, P, Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd Lambda;
  LevelVector c;
  LevelVector p;
};

struct QueryRecord {
  std::string id;
  VerdictKind kind = VerdictKind::DepthExhausted;
  double tau = 0.0;
  Eigen::VectorXd witness;
  double witness_value = 0.0;
  long boxes_explored = 0;
  double wall_ms = 0.0;
};

enum class Stage { LocalQuadratic, QuadraticExpanded, NeuralExpanded };

const char* to_string(Stage s);

struct PipelineConfig {
  double q_scale = 1.0;         // Q_i = q_scale * I in the Lyapunov equations
  Stage target_stage = Stage::NeuralExpanded;
  double epsilon = -1e-3;       // strict-decrease margin, must be < 0
  double delta = 1e-4;
  long max_boxes = 1'000'000;
  long sup_max_boxes = 200'000;          // Step-1 gain bounds
  long expand_sup_max_boxes = 200'000;   // coupling bounds inside level expansion
  double sup_rel_tol = 0.05;
  double sup_abs_tol = 1e-4;  // stop refining sup bounds below this absolute gap
  int workers = 1;
  double growth = 1.2;
  double stop_threshold = 0.02;
  double bisect_tol = 0.01;
  int max_halvings = 60;
  int max_expand_iterations = 40;
  double initial_c_scale = 0.5;    // interconnected Step 1 start, from isolated levels
  double shell_fraction = 0.05;    // domain boundary shell width (fraction of extent)
  double thin_annulus = 0.05;      // invariance annulus below a level (fraction)
  double containment_tolerance = 0.0;
  // Step-3 scaling mode: a single common factor on the isolated levels
  // (the default), or one factor per subsystem.
  bool independent_scaling = false;
};

/// Records every verifier verdict the pipeline produced, in issue order.
class QueryLog {
 public:
  void add(QueryRecord r) { records_.push_back(std::move(r)); }
  const std::vector<QueryRecord>& records() const { return records_; }

 private:
  std::vector<QueryRecord> records_;
};

/// A_i = Df_i(0) for every subsystem; every A_i must be Hurwitz.
std::vector<Eigen::MatrixXd> linearize(const SystemNetwork& net);

/// Gain-matrix assembly: Lambda(i,i) = -lmin(Q_i)/lmax(P_i)
/// + 2 (R(i,i) + sum_{j != i} R(i,j)) / lmin(P_i) and
/// Lambda(i,j) = R(i,j) / lmin(P_j). Metzler whenever R >= 0.
Eigen::MatrixXd assemble_gain_matrix(const Eigen::MatrixXd& R,
                                     const std::vector<Eigen::MatrixXd>& P,
                                     const std::vector<Eigen::MatrixXd>& Q);

/// Certified gain bounds over the product of ellipsoids P_i(c_i):
/// R(i,i) >= sup |P_i Dg_i|, R(i,j) >= sup |P_i DG_ij| (Frobenius), and the
/// Metzler matrix Lambda assembled from them.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> compute_gain_matrix(
    const SystemNetwork& net, const std::vector<Eigen::MatrixXd>& P,
    const std::vector<Eigen::MatrixXd>& Q, const LevelVector& c, const PipelineConfig& cfg,
    QueryLog* log = nullptr);

/// Step 1: scale the gain-validity levels down (factor 1/2) until -Lambda is
/// a nonsingular M-matrix and the canonical p = (-Lambda)^{-1} 1, rescaled
/// under c, certifies the product region P(p).
QuadCertificate local_stability(const SystemNetwork& net, LevelVector initial_c,
                                const PipelineConfig& cfg, QueryLog* log = nullptr);

/// One reachability step (levels c -> v, componentwise c <= v): certify the
/// decomposed conditions (coupling sup bounds g_ij over the product of
/// sub-level sets, then the per-subsystem annulus decrease including them).
/// Returns true iff every subsystem certified.
struct ExpandOutcome {
  bool certified = false;
  int failed_subsystem = -1;
  std::string reason;
};

/// Memo for repeated expansion attempts over the same Lyapunov functions:
/// coupling sups keyed by levels, annulus/shell verdicts keyed by their
/// inputs. Only valid while the V objects and config stay fixed.
struct ExpandCache {
  std::map<std::array<double, 4>, double> coupling;
  std::map<std::array<double, 4>, bool> annulus;
  std::map<std::array<double, 2>, bool> shell;
};

ExpandOutcome expand_levels(const SystemNetwork& net, const VectorLyapunov& V,
                            const LevelVector& c, const LevelVector& v, double epsilon,
                            const PipelineConfig& cfg, QueryLog* log = nullptr,
                            ExpandCache* cache = nullptr);

/// Grow levels geometrically (cfg.growth), bisecting the factor on rejection
/// until the relative step drops below cfg.stop_threshold. Returns the
/// certified monotone sequence, starting at `start`.
std::vector<LevelVector> expand_iteratively(const SystemNetwork& net, const VectorLyapunov& V,
                                            const LevelVector& start, const PipelineConfig& cfg,
                                            QueryLog* log = nullptr);

/// Step 3 containment: every {V_i <= c_V[i]} inside the ellipsoid
/// {x^T P_i x <= p[i]}, certified per subsystem.
ExpandOutcome check_containment(const VectorLyapunov& neural, const LevelVector& c_V,
                                const std::vector<Eigen::MatrixXd>& P, const LevelVector& p,
                                const PipelineConfig& cfg, QueryLog* log = nullptr);

/// Largest s in (0, 1] (tolerance cfg.bisect_tol) such that the scaled
/// initial neural levels s * v0 are certified: contained in the quadratic
/// region, clear of the domain boundary, and invariant via a thin annulus.
struct BisectResult {
  double scale = 0.0;
  LevelVector levels;  // s * v0 when scale > 0
  std::string failure_reason;
};

BisectResult bisect_scale(const SystemNetwork& net, const VectorLyapunov& neural,
                          const LevelVector& v0, const std::vector<Eigen::MatrixXd>& P,
                          const LevelVector& quad_levels, const PipelineConfig& cfg,
                          QueryLog* log = nullptr);

struct RoaCertificate {
  Stage stage = Stage::LocalQuadratic;
  QuadCertificate quad;
  std::vector<LevelVector> quad_levels;      // c^m_P, starting at p
  std::vector<LevelVector> neural_levels;    // c^m_V, starting at s* v0
  double neural_scale = 0.0;                 // s*
  LevelVector isolated_quad_levels;          // per-subsystem, couplings removed
  LevelVector isolated_neural_levels;        // v0
  std::vector<QueryRecord> records;
  std::string failure_reason;                // nonempty when a later stage failed
};

/// The full pipeline: Step 1 local quadratic stability, Step 2 quadratic
/// level expansion, Step 3 neural containment with scale bisection and
/// neural level expansion. `nets` gives the trained per-subsystem Lyapunov
/// networks. Never fabricates certificates: any stage that fails leaves the
/// certificate at the last fully certified stage with the reason recorded.
RoaCertificate certify_network(const SystemNetwork& net,
                               const std::vector<std::shared_ptr<const Mlp>>& nets,
                               const PipelineConfig& cfg);

}  // namespace vlyap
