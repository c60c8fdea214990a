#pragma once

#include <string>
#include <vector>

#include "vlyap/scalar_fn.hpp"

namespace vlyap {

/// Region side condition lo <= fn(x) <= hi (either side may be infinite).
struct Constraint {
  ScalarFnPtr fn;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

/// Claim: goal(x) <= tau for every x in the box that satisfies all
/// constraints. delta is the weakening width of the refutation side.
struct Query {
  std::string id;
  ScalarFnPtr goal;
  double tau = 0.0;
  Box region;
  std::vector<Constraint> constraints;
  double delta = 1e-4;
  long max_boxes = 1'000'000;
  double min_width = 1e-9;
  double feasibility_margin = 1e-9;
};

enum class VerdictKind { Certified, Refuted, DeltaSat, DepthExhausted };

const char* to_string(VerdictKind k);

struct Verdict {
  VerdictKind kind = VerdictKind::DepthExhausted;
  Eigen::VectorXd witness;      // Refuted / DeltaSat: feasible point
  double witness_value = 0.0;   // goal at the witness (plain arithmetic)
  Box worst_box;                // DepthExhausted: first unresolved box
  long boxes_explored = 0;
  double wall_ms = 0.0;         // reporting only; excluded from determinism

  bool certified() const { return kind == VerdictKind::Certified; }
};

/// Interval branch-and-bound decision procedure. Sound: Certified implies
/// the claim holds everywhere on the constrained region (up to interval
/// arithmetic soundness). DeltaSat exhibits a feasible witness with
/// goal(witness) > tau - delta. Budget exhaustion surfaces as
/// DepthExhausted, never as Certified. The verdict (kind and witness) is
/// deterministic for any worker count: boxes are processed in synchronized
/// waves and events merge by fixed box order.
Verdict certify(const Query& q, int workers = 1);

/// Certified upper bound r on sup over the constrained region of the
/// Frobenius norm of an expression matrix (a sound overestimate of the
/// spectral norm). Best-first maximization; returns a possibly loose but
/// always sound bound when the box budget runs out before `rel_tol` is met.
struct SupOptions {
  double rel_tol = 0.05;
  double abs_tol = 1e-6;
  long max_boxes = 200'000;
};

struct SupBound {
  double value = 0.0;   // certified upper bound (already square-rooted)
  bool tight = false;   // tolerance met within budget
  long boxes_explored = 0;
};

SupBound sup_frobenius_gain(const std::vector<std::vector<Expr>>& entries, const Box& region,
                            const std::vector<Constraint>& constraints, const SupOptions& opt = {},
                            int workers = 1);

/// Certified upper bound on sup of an arbitrary scalar function, same
/// algorithm as sup_frobenius_gain without the square root.
SupBound sup_upper_bound(const ScalarFnPtr& fn, const Box& region,
                         const std::vector<Constraint>& constraints, const SupOptions& opt = {},
                         int workers = 1);

}  // namespace vlyap
