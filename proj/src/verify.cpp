#include "vlyap/verify.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <queue>
#include <thread>

namespace vlyap {

const char* to_string(VerdictKind k) {
  switch (k) {
    case VerdictKind::Certified: return "certified";
    case VerdictKind::Refuted: return "refuted";
    case VerdictKind::DeltaSat: return "delta-sat";
    case VerdictKind::DepthExhausted: return "depth-exhausted";
  }
  return "?";
}

namespace {

enum class BoxOutcome { Discard, Split, Refuted, DeltaSat, Unresolved };

struct BoxResult {
  BoxOutcome outcome = BoxOutcome::Discard;
  Eigen::VectorXd witness;
  double witness_value = 0.0;
};

// Exact-arithmetic feasibility of a point, with a small interior margin on
// finite bounds so witnesses are not artifacts of boundary rounding.
bool feasible_point(const std::vector<Constraint>& cs, const Eigen::VectorXd& x, double margin) {
  for (const auto& c : cs) {
    double v;
    try {
      v = c.fn->eval_point(x);
    } catch (const EvalError&) {
      return false;
    }
    if (!std::isfinite(v)) return false;
    double m = margin;
    if (std::isfinite(c.lo) && std::isfinite(c.hi)) m = std::min(margin, 0.25 * (c.hi - c.lo));
    if (std::isfinite(c.lo) && v < c.lo + m) return false;
    if (std::isfinite(c.hi) && v > c.hi - m) return false;
  }
  return true;
}

BoxResult process_box(const Query& q, const Box& box) {
  BoxResult r;
  // Discard boxes that provably violate some region constraint everywhere.
  for (const auto& c : q.constraints) {
    const auto enc = c.fn->eval_interval(box);
    if (enc && (enc->hi < c.lo || enc->lo > c.hi)) {
      r.outcome = BoxOutcome::Discard;
      return r;
    }
  }
  const auto genc = q.goal->eval_interval(box);
  if (genc && genc->hi <= q.tau) {
    r.outcome = BoxOutcome::Discard;
    return r;
  }

  const Eigen::VectorXd mid = box.midpoint();
  bool mid_feasible = feasible_point(q.constraints, mid, q.feasibility_margin);
  double gval = std::numeric_limits<double>::quiet_NaN();
  if (mid_feasible) {
    try {
      gval = q.goal->eval_point(mid);
    } catch (const EvalError&) {
      mid_feasible = false;
    }
    if (mid_feasible && std::isfinite(gval) && gval > q.tau) {
      r.outcome = BoxOutcome::Refuted;
      r.witness = mid;
      r.witness_value = gval;
      return r;
    }
  }

  if (box.max_width() >= q.min_width) {
    r.outcome = BoxOutcome::Split;
    return r;
  }
  // Width floor. The box tree never depends on delta, so a query certified
  // at some delta stays certified at any larger one; delta only decides how
  // straddling floor boxes are reported.
  if (mid_feasible && std::isfinite(gval) && genc && genc->lo > q.tau - q.delta) {
    r.outcome = BoxOutcome::DeltaSat;
    r.witness = mid;
    r.witness_value = gval;
    return r;
  }
  r.outcome = BoxOutcome::Unresolved;
  return r;
}

// Run fn(i) for i in [0, n) over `workers` threads in fixed-size chunks;
// results land in caller-indexed slots, so the merge is order-independent.
template <typename F>
void parallel_for(long n, int workers, F fn) {
  if (workers <= 1 || n < 2) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  auto body = [&] {
    for (;;) {
      const long start = next.fetch_add(64);
      if (start >= n) break;
      const long end = std::min(n, start + 64);
      for (long i = start; i < end; ++i) fn(i);
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
}

}  // namespace

Verdict certify(const Query& q, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict verdict;
  verdict.kind = VerdictKind::Certified;
  bool exhausted = false;
  Box first_unresolved;

  std::vector<Box> frontier = {q.region};
  long processed = 0;
  while (!frontier.empty()) {
    // Budget: process a deterministic prefix of the wave, then stop.
    const long allowed = q.max_boxes - processed;
    if (static_cast<long>(frontier.size()) > allowed) {
      const size_t cut = static_cast<size_t>(std::max<long>(0, allowed));
      if (!exhausted) {
        exhausted = true;
        first_unresolved = frontier[cut];
      }
      frontier.resize(cut);
    }
    if (frontier.empty()) break;

    std::vector<BoxResult> results(frontier.size());
    parallel_for(static_cast<long>(frontier.size()), workers,
                 [&](long i) { results[static_cast<size_t>(i)] = process_box(q, frontier[static_cast<size_t>(i)]); });
    processed += static_cast<long>(frontier.size());

    // Deterministic merge: Refuted beats DeltaSat, ties by box order.
    long refuted_at = -1, deltasat_at = -1;
    for (size_t i = 0; i < results.size(); ++i) {
      if (results[i].outcome == BoxOutcome::Refuted && refuted_at < 0)
        refuted_at = static_cast<long>(i);
      if (results[i].outcome == BoxOutcome::DeltaSat && deltasat_at < 0)
        deltasat_at = static_cast<long>(i);
    }
    if (refuted_at >= 0 || deltasat_at >= 0) {
      const long at = refuted_at >= 0 ? refuted_at : deltasat_at;
      verdict.kind = refuted_at >= 0 ? VerdictKind::Refuted : VerdictKind::DeltaSat;
      verdict.witness = results[static_cast<size_t>(at)].witness;
      verdict.witness_value = results[static_cast<size_t>(at)].witness_value;
      verdict.boxes_explored = processed;
      verdict.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      return verdict;
    }

    std::vector<Box> next;
    next.reserve(frontier.size());
    for (size_t i = 0; i < results.size(); ++i) {
      switch (results[i].outcome) {
        case BoxOutcome::Split: {
          auto [a, b] = frontier[i].bisect(frontier[i].widest_dim());
          next.push_back(std::move(a));
          next.push_back(std::move(b));
          break;
        }
        case BoxOutcome::Unresolved:
          if (!exhausted) {
            exhausted = true;
            first_unresolved = frontier[i];
          }
          break;
        default: break;
      }
    }
    frontier = std::move(next);
  }

  verdict.kind = exhausted ? VerdictKind::DepthExhausted : VerdictKind::Certified;
  if (exhausted) verdict.worst_box = first_unresolved;
  verdict.boxes_explored = processed;
  verdict.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return verdict;
}

namespace {

struct SupNode {
  double hi;       // enclosure upper bound
  long id;         // deterministic tie-break
  Box box;
};

struct SupNodeLess {
  bool operator()(const SupNode& a, const SupNode& b) const {
    if (a.hi != b.hi) return a.hi < b.hi;
    return a.id > b.id;
  }
};

}  // namespace

SupBound sup_upper_bound(const ScalarFnPtr& fn, const Box& region,
                         const std::vector<Constraint>& constraints, const SupOptions& opt,
                         int workers) {
  SupBound out;
  std::priority_queue<SupNode, std::vector<SupNode>, SupNodeLess> heap;
  long next_id = 0;
  double best_feasible = -std::numeric_limits<double>::infinity();

  struct Evaluated {
    bool keep = false;
    double hi = 0.0;
    double feasible_value = -std::numeric_limits<double>::infinity();
    Box box;
  };

  // Enclosure work is thread-safe on immutable inputs; heap updates and the
  // running bounds stay on the calling thread, in index order.
  auto evaluate = [&](Box b) {
    Evaluated r;
    for (const auto& c : constraints) {
      const auto enc = c.fn->eval_interval(b);
      if (enc && (enc->hi < c.lo || enc->lo > c.hi)) return r;  // infeasible box
    }
    const auto genc = fn->eval_interval(b);
    r.hi = genc ? genc->hi : std::numeric_limits<double>::infinity();
    if (feasible_point(constraints, b.midpoint(), 0.0)) {
      try {
        r.feasible_value = fn->eval_point(b.midpoint());
      } catch (const EvalError&) {
      }
    }
    r.keep = true;
    r.box = std::move(b);
    return r;
  };

  auto absorb = [&](Evaluated r) {
    if (!r.keep) return;
    best_feasible = std::max(best_feasible, r.feasible_value);
    heap.push({r.hi, next_id++, std::move(r.box)});
  };

  absorb(evaluate(region));
  long processed = 0;
  const size_t batch = static_cast<size_t>(std::max(1, 4 * workers));
  std::vector<Box> children;
  std::vector<Evaluated> results;
  while (!heap.empty()) {
    const SupNode& top = heap.top();
    if (processed >= opt.max_boxes) {
      out.value = top.hi;
      out.tight = false;
      out.boxes_explored = processed;
      return out;
    }
    const double gap_tol = opt.abs_tol + opt.rel_tol * std::max(std::abs(top.hi), 1e-12);
    if (std::isfinite(best_feasible) && top.hi - best_feasible <= gap_tol) {
      out.value = top.hi;
      out.tight = true;
      out.boxes_explored = processed;
      return out;
    }
    if (top.box.max_width() < 1e-10) {
      // Cannot split further; its own bound stands.
      out.value = top.hi;
      out.tight = false;
      out.boxes_explored = processed;
      return out;
    }

    children.clear();
    while (!heap.empty() && children.size() < 2 * batch) {
      const SupNode node = heap.top();
      // Only expand nodes that still matter for the bound.
      if (children.size() >= 2 && std::isfinite(best_feasible) &&
          node.hi - best_feasible <= gap_tol)
        break;
      heap.pop();
      ++processed;
      if (node.box.max_width() < 1e-10) {
        heap.push(node);  // restore; handled by the width check above next round
        --processed;
        break;
      }
      auto [a, b] = node.box.bisect(node.box.widest_dim());
      children.push_back(std::move(a));
      children.push_back(std::move(b));
      if (processed >= opt.max_boxes) break;
    }
    if (children.empty()) continue;
    results.assign(children.size(), {});
    parallel_for(static_cast<long>(children.size()), workers, [&](long i) {
      results[static_cast<size_t>(i)] = evaluate(std::move(children[static_cast<size_t>(i)]));
    });
    for (auto& r : results) absorb(std::move(r));
  }
  // Entire region infeasible: the sup over an empty set; report zero.
  out.value = std::max(0.0, best_feasible);
  out.tight = true;
  out.boxes_explored = processed;
  return out;
}

SupBound sup_frobenius_gain(const std::vector<std::vector<Expr>>& entries, const Box& region,
                            const std::vector<Constraint>& constraints, const SupOptions& opt,
                            int workers) {
  // Frobenius norm squared as a single expression: sum of squared entries.
  Expr sq = Expr::constant(0.0);
  for (const auto& row : entries)
    for (const auto& e : row) sq = sq + pow(e, 2);
  SupBound b = sup_upper_bound(expr_fn(sq), region, constraints, opt, workers);
  b.value = std::sqrt(std::max(0.0, b.value));
  return b;
}

}  // namespace vlyap
