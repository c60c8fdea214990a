#include "vlyap/compose.hpp"

#include <algorithm>
#include <cmath>

#include "vlyap/linalg.hpp"

namespace vlyap {

namespace {

constexpr double kEquilibriumTol = 1e-12;

QueryRecord record_of(const std::string& id, const Verdict& v, double tau) {
  QueryRecord r;
  r.id = id;
  r.kind = v.kind;
  r.tau = tau;
  r.witness = v.witness;
  r.witness_value = v.witness_value;
  r.boxes_explored = v.boxes_explored;
  r.wall_ms = v.wall_ms;
  return r;
}

void log_record(QueryLog* log, QueryRecord r) {
  if (log) log->add(std::move(r));
}

}  // namespace

const char* to_string(Stage s) {
  switch (s) {
    case Stage::LocalQuadratic: return "local-quadratic";
    case Stage::QuadraticExpanded: return "quadratic-expanded";
    case Stage::NeuralExpanded: return "neural-expanded";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// SystemNetwork

SystemNetwork::SystemNetwork(std::vector<Subsystem> subsystems, std::vector<Coupling> couplings)
    : subsystems_(std::move(subsystems)), couplings_(std::move(couplings)) {
  offsets_.reserve(subsystems_.size());
  for (const auto& s : subsystems_) {
    if (s.dim <= 0 || static_cast<int>(s.f.size()) != s.dim || s.domain.dim() != s.dim)
      throw PipelineError("subsystem dimension mismatch");
    offsets_.push_back(total_dim_);
    total_dim_ += s.dim;
  }
  for (size_t k = 0; k < subsystems_.size(); ++k) {
    const auto& s = subsystems_[k];
    const Eigen::VectorXd origin = Eigen::VectorXd::Zero(s.dim);
    for (const auto& e : s.f)
      if (std::abs(eval(e, origin)) > kEquilibriumTol)
        throw PipelineError("f does not vanish at the origin", static_cast<int>(k));
  }
  for (const auto& cpl : couplings_) {
    if (cpl.i < 0 || cpl.i >= size() || cpl.j < 0 || cpl.j >= size() || cpl.i == cpl.j)
      throw PipelineError("coupling indices out of range");
    const int ni = subsystem(cpl.i).dim, nj = subsystem(cpl.j).dim;
    if (static_cast<int>(cpl.g.size()) != ni)
      throw PipelineError("coupling component count mismatch", cpl.i);
    const Eigen::VectorXd origin = Eigen::VectorXd::Zero(ni + nj);
    for (const auto& e : cpl.g) {
      if (e.arity() > ni + nj) throw PipelineError("coupling arity exceeds pair dimension", cpl.i);
      if (std::abs(eval(e, origin)) > kEquilibriumTol)
        throw PipelineError("coupling does not vanish at the origin", cpl.i);
    }
  }
}

std::vector<const Coupling*> SystemNetwork::in_edges(int i) const {
  std::vector<const Coupling*> out;
  for (const auto& c : couplings_)
    if (c.i == i) out.push_back(&c);
  return out;
}

Eigen::VectorXd SystemNetwork::field(const Eigen::VectorXd& x) const {
  Eigen::VectorXd dx(total_dim_);
  for (int i = 0; i < size(); ++i) {
    const auto& s = subsystem(i);
    const Eigen::VectorXd xi = x.segment(offset(i), s.dim);
    for (int k = 0; k < s.dim; ++k) dx[offset(i) + k] = eval(s.f[static_cast<size_t>(k)], xi);
  }
  for (const auto& c : couplings_) {
    const int ni = subsystem(c.i).dim, nj = subsystem(c.j).dim;
    Eigen::VectorXd pair(ni + nj);
    pair.head(ni) = x.segment(offset(c.i), ni);
    pair.tail(nj) = x.segment(offset(c.j), nj);
    for (int k = 0; k < ni; ++k) dx[offset(c.i) + k] += eval(c.g[static_cast<size_t>(k)], pair);
  }
  return dx;
}

SystemNetwork SystemNetwork::decoupled() const { return SystemNetwork(subsystems_, {}); }

SystemNetwork SystemNetwork::isolated(int i) const {
  return SystemNetwork({subsystem(i)}, {});
}

// ---------------------------------------------------------------------------
// SubsystemLyapunov

SubsystemLyapunov SubsystemLyapunov::quadratic(Eigen::MatrixXd P, Box domain) {
  SubsystemLyapunov v;
  v.P_ = 0.5 * (P + P.transpose());
  v.domain_ = std::move(domain);
  v.p_min_ = sym_eig_bounds(v.P_).first;
  if (v.p_min_ <= 0.0) throw PipelineError("quadratic Lyapunov matrix must be positive definite");
  return v;
}

SubsystemLyapunov SubsystemLyapunov::neural(std::shared_ptr<const Mlp> net, Box domain) {
  SubsystemLyapunov v;
  v.net_ = std::move(net);
  v.domain_ = std::move(domain);
  return v;
}

double SubsystemLyapunov::value(const Eigen::VectorXd& x) const {
  if (net_) return forward(*net_, x);
  return x.dot(P_ * x);
}

ScalarFnPtr SubsystemLyapunov::fn(int offset, int total_arity) const {
  if (net_) return mlp_value_fn(net_, offset, total_arity);
  return quad_form_fn(P_, offset, total_arity);
}

ScalarFnPtr SubsystemLyapunov::derivative_fn(int offset, int total_arity,
                                             const std::vector<Expr>& field) const {
  if (net_) return mlp_grad_dot_fn(net_, offset, total_arity, field);
  // grad V = 2 P x as expressions over the global coordinates.
  const int n = static_cast<int>(P_.rows());
  Expr dot = Expr::constant(0.0);
  for (int k = 0; k < n; ++k) {
    Expr gk = Expr::constant(0.0);
    for (int m = 0; m < n; ++m)
      gk = gk + Expr::constant(2.0 * P_(k, m)) * Expr::variable(offset + m, total_arity);
    dot = dot + gk * field[static_cast<size_t>(k)];
  }
  return expr_fn(dot);
}

namespace {

Box intersect_boxes(const Box& a, const Box& b) {
  Box out = a;
  for (int i = 0; i < a.dim(); ++i) {
    out[i].lo = std::max(a[i].lo, b[i].lo);
    out[i].hi = std::min(a[i].hi, b[i].hi);
    if (out[i].lo > out[i].hi) out[i].lo = out[i].hi;  // degenerate but valid
  }
  return out;
}

}  // namespace

Box SubsystemLyapunov::region_box(double level) const {
  Box base = domain_;
  if (!net_) {
    const int n = static_cast<int>(P_.rows());
    const double r = std::sqrt(std::max(0.0, level) / p_min_);
    base = Box::centered(n, r);
  }
  if (outer_.dim() == base.dim()) return intersect_boxes(base, outer_);
  return base;
}

SubsystemLyapunov SubsystemLyapunov::restricted_to(const Box& outer) const {
  SubsystemLyapunov copy = *this;
  copy.outer_ = outer;
  return copy;
}

// ---------------------------------------------------------------------------
// Step 1 machinery

std::vector<Eigen::MatrixXd> linearize(const SystemNetwork& net) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<size_t>(net.size()));
  for (int i = 0; i < net.size(); ++i) {
    const auto& s = net.subsystem(i);
    const auto J = jacobian(s.f);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(s.dim, s.dim);
    const Eigen::VectorXd origin = Eigen::VectorXd::Zero(s.dim);
    for (int r = 0; r < s.dim; ++r)
      for (size_t cidx = 0; cidx < J[static_cast<size_t>(r)].size() &&
                            cidx < static_cast<size_t>(s.dim);
           ++cidx)
        A(r, static_cast<Eigen::Index>(cidx)) = eval(J[static_cast<size_t>(r)][cidx], origin);
    if (!is_hurwitz(A))
      throw PipelineError("linearization is not Hurwitz for subsystem " + std::to_string(i), i);
    out.push_back(std::move(A));
  }
  return out;
}

namespace {

// Expression matrix for P * (Df - A) over the subsystem's own coordinates.
std::vector<std::vector<Expr>> remainder_gain_entries(const Subsystem& s,
                                                      const Eigen::MatrixXd& A,
                                                      const Eigen::MatrixXd& P) {
  const int n = s.dim;
  const auto J = jacobian(s.f);
  auto dg = [&](int r, int c) -> Expr {
    Expr e = Expr::constant(-A(r, c));
    if (c < static_cast<int>(J[static_cast<size_t>(r)].size()))
      e = J[static_cast<size_t>(r)][static_cast<size_t>(c)] + e;
    return e;
  };
  std::vector<std::vector<Expr>> rows;
  for (int r = 0; r < n; ++r) {
    std::vector<Expr> row;
    for (int c = 0; c < n; ++c) {
      Expr acc = Expr::constant(0.0);
      for (int k = 0; k < n; ++k) acc = acc + Expr::constant(P(r, k)) * dg(k, c);
      row.push_back(acc);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Expression matrix for P_i * DG_ij over the pair coordinates (x_i, x_j).
std::vector<std::vector<Expr>> coupling_gain_entries(const Coupling& cpl, int ni, int nj,
                                                     const Eigen::MatrixXd& P) {
  const auto J = jacobian(cpl.g);  // ni rows, up to ni + nj cols
  auto entry = [&](int r, int c) -> Expr {
    if (c < static_cast<int>(J[static_cast<size_t>(r)].size()))
      return J[static_cast<size_t>(r)][static_cast<size_t>(c)];
    return Expr::constant(0.0);
  };
  std::vector<std::vector<Expr>> rows;
  for (int r = 0; r < ni; ++r) {
    std::vector<Expr> row;
    for (int c = 0; c < ni + nj; ++c) {
      Expr acc = Expr::constant(0.0);
      for (int k = 0; k < ni; ++k) acc = acc + Expr::constant(P(r, k)) * entry(k, c);
      row.push_back(acc);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Box ellipsoid_box(const Eigen::MatrixXd& P, double level) {
  const double pmin = sym_eig_bounds(P).first;
  return Box::centered(static_cast<int>(P.rows()), std::sqrt(std::max(0.0, level) / pmin));
}

}  // namespace

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> compute_gain_matrix(
    const SystemNetwork& net, const std::vector<Eigen::MatrixXd>& P,
    const std::vector<Eigen::MatrixXd>& Q, const LevelVector& c, const PipelineConfig& cfg,
    QueryLog* log) {
  const int l = net.size();
  const auto A = linearize(net);
  // The gain matrix feeds the M-matrix test and the certified levels p;
  // keep these bounds tight regardless of the expansion-stage tolerance.
  SupOptions sopt;
  sopt.rel_tol = cfg.sup_rel_tol;
  sopt.abs_tol = std::min(cfg.sup_abs_tol, 1e-6);
  sopt.max_boxes = cfg.sup_max_boxes;

  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(l, l);
  for (int i = 0; i < l; ++i) {
    const auto& s = net.subsystem(i);
    const auto entries = remainder_gain_entries(s, A[static_cast<size_t>(i)],
                                                P[static_cast<size_t>(i)]);
    const Box bb = ellipsoid_box(P[static_cast<size_t>(i)], c[i]);
    std::vector<Constraint> cs = {{quad_form_fn(P[static_cast<size_t>(i)], 0, s.dim), 0.0, c[i]}};
    const SupBound b = sup_frobenius_gain(entries, bb, cs, sopt, cfg.workers);
    R(i, i) = b.value;
    QueryRecord rec;
    rec.id = "gain/r_" + std::to_string(i) + std::to_string(i);
    rec.kind = VerdictKind::Certified;
    rec.tau = b.value;
    rec.witness_value = b.value;
    rec.boxes_explored = b.boxes_explored;
    log_record(log, std::move(rec));
  }
  for (const auto& cpl : net.couplings()) {
    const int ni = net.subsystem(cpl.i).dim, nj = net.subsystem(cpl.j).dim;
    const auto entries = coupling_gain_entries(cpl, ni, nj, P[static_cast<size_t>(cpl.i)]);
    const Box bb = Box::product(ellipsoid_box(P[static_cast<size_t>(cpl.i)], c[cpl.i]),
                                ellipsoid_box(P[static_cast<size_t>(cpl.j)], c[cpl.j]));
    std::vector<Constraint> cs = {
        {quad_form_fn(P[static_cast<size_t>(cpl.i)], 0, ni + nj), 0.0, c[cpl.i]},
        {quad_form_fn(P[static_cast<size_t>(cpl.j)], ni, ni + nj), 0.0, c[cpl.j]}};
    const SupBound b = sup_frobenius_gain(entries, bb, cs, sopt, cfg.workers);
    R(cpl.i, cpl.j) = std::max(R(cpl.i, cpl.j), b.value);
    QueryRecord rec;
    rec.id = "gain/r_" + std::to_string(cpl.i) + std::to_string(cpl.j);
    rec.kind = VerdictKind::Certified;
    rec.tau = b.value;
    rec.witness_value = b.value;
    rec.boxes_explored = b.boxes_explored;
    log_record(log, std::move(rec));
  }

  return {R, assemble_gain_matrix(R, P, Q)};
}

Eigen::MatrixXd assemble_gain_matrix(const Eigen::MatrixXd& R,
                                     const std::vector<Eigen::MatrixXd>& P,
                                     const std::vector<Eigen::MatrixXd>& Q) {
  const int l = static_cast<int>(R.rows());
  Eigen::MatrixXd Lambda(l, l);
  for (int i = 0; i < l; ++i) {
    const auto [qmin, qmax] = sym_eig_bounds(Q[static_cast<size_t>(i)]);
    const auto [pmin, pmax] = sym_eig_bounds(P[static_cast<size_t>(i)]);
    double off_sum = 0.0;
    for (int j = 0; j < l; ++j)
      if (j != i) off_sum += R(i, j);
    Lambda(i, i) = -qmin / pmax + 2.0 * (R(i, i) + off_sum) / pmin;
    for (int j = 0; j < l; ++j) {
      if (j == i) continue;
      const double pmin_j = sym_eig_bounds(P[static_cast<size_t>(j)]).first;
      Lambda(i, j) = R(i, j) / pmin_j;
    }
  }
  return Lambda;
}

QuadCertificate local_stability(const SystemNetwork& net, LevelVector initial_c,
                                const PipelineConfig& cfg, QueryLog* log) {
  const int l = net.size();
  QuadCertificate cert;
  cert.A = linearize(net);
  for (int i = 0; i < l; ++i) {
    const int n = net.subsystem(i).dim;
    cert.Q.push_back(cfg.q_scale * Eigen::MatrixXd::Identity(n, n));
    cert.P.push_back(solve_lyapunov(cert.A[static_cast<size_t>(i)], cert.Q.back()));
  }

  LevelVector c = std::move(initial_c);
  for (int halving = 0; halving <= cfg.max_halvings; ++halving) {
    auto [R, Lambda] = compute_gain_matrix(net, cert.P, cert.Q, c, cfg, log);
    const auto p = find_positive_p(Lambda);
    if (p.has_value()) {
      // Rescale by a single factor so p <= c while keeping Lambda p < 0.
      double s = 1.0;
      for (int i = 0; i < l; ++i) s = std::min(s, c[i] / (*p)[i]);
      LevelVector scaled = s * *p;
      if (((Lambda * scaled).array() < 0.0).all()) {
        cert.R = R;
        cert.Lambda = Lambda;
        cert.c = c;
        cert.p = scaled;
        return cert;
      }
    }
    c *= 0.5;
  }
  throw PipelineError("no certifiable local region within the halving budget");
}

// ---------------------------------------------------------------------------
// Reachability steps

namespace {

double shell_margin(double level) { return 1e-9 * std::max(1.0, std::abs(level)); }

// Face slabs covering domain \ shrunken-domain.
std::vector<Box> shell_slabs(const Box& domain, double fraction) {
  std::vector<Box> slabs;
  for (int d = 0; d < domain.dim(); ++d) {
    const double w = domain[d].width() * fraction;
    Box lo = domain, hi = domain;
    lo[d].hi = domain[d].lo + w;
    hi[d].lo = domain[d].hi - w;
    slabs.push_back(lo);
    slabs.push_back(hi);
  }
  return slabs;
}

// Certify that {V <= level} stays strictly inside the validity domain:
// V >= level + margin on every boundary slab.
ExpandOutcome certify_shell(const SubsystemLyapunov& V, int subsystem, double level,
                            const PipelineConfig& cfg, QueryLog* log, const std::string& tag,
                            ExpandCache* cache = nullptr) {
  ExpandOutcome out;
  if (cache) {
    const std::array<double, 2> key = {static_cast<double>(subsystem), level};
    auto it = cache->shell.find(key);
    if (it != cache->shell.end()) {
      out.certified = it->second;
      if (!out.certified) {
        out.failed_subsystem = subsystem;
        out.reason = tag + "/shell/sub" + std::to_string(subsystem) + ": cached failure";
      }
      return out;
    }
  }
  const auto slabs = shell_slabs(V.domain(), cfg.shell_fraction);
  for (size_t s = 0; s < slabs.size(); ++s) {
    Query q;
    q.id = tag + "/shell" + std::to_string(s) + "/sub" + std::to_string(subsystem);
    q.goal = scale_fn(-1.0, V.fn(0, slabs[s].dim()));
    q.tau = -(level + shell_margin(level));
    q.region = slabs[s];
    q.delta = cfg.delta;
    q.max_boxes = cfg.max_boxes;
    const Verdict v = certify(q, cfg.workers);
    log_record(log, record_of(q.id, v, q.tau));
    if (!v.certified()) {
      out.certified = false;
      out.failed_subsystem = subsystem;
      out.reason = q.id + ": " + to_string(v.kind);
      if (cache)
        cache->shell[{static_cast<double>(subsystem), level}] = false;
      return out;
    }
  }
  out.certified = true;
  if (cache) cache->shell[{static_cast<double>(subsystem), level}] = true;
  return out;
}

}  // namespace

ExpandOutcome expand_levels(const SystemNetwork& net, const VectorLyapunov& V,
                            const LevelVector& c, const LevelVector& v, double epsilon,
                            const PipelineConfig& cfg, QueryLog* log, ExpandCache* cache) {
  ExpandOutcome out;
  const int l = net.size();
  if (epsilon >= 0.0) throw PipelineError("expand_levels: epsilon must be negative");
  for (int i = 0; i < l; ++i)
    if (!(c[i] <= v[i])) throw PipelineError("expand_levels: requires c <= v componentwise", i);

  SupOptions sopt;
  sopt.rel_tol = cfg.sup_rel_tol;
  sopt.abs_tol = cfg.sup_abs_tol;
  sopt.max_boxes = cfg.expand_sup_max_boxes;

  for (int i = 0; i < l; ++i) {
    if (v[i] <= c[i]) continue;  // vacuous annulus: nothing to certify

    // Coupling sup bounds g_ij over V_i(v_i) x V_j(v_j).
    double gsum = 0.0;
    int edge_index = 0;
    for (const Coupling* cpl : net.in_edges(i)) {
      const std::array<double, 4> key = {static_cast<double>(i) + 1e3 * edge_index,
                                         static_cast<double>(cpl->j), v[i], v[cpl->j]};
      ++edge_index;
      if (cache) {
        auto it = cache->coupling.find(key);
        if (it != cache->coupling.end()) {
          gsum += it->second;
          continue;
        }
      }
      const int ni = net.subsystem(i).dim, nj = net.subsystem(cpl->j).dim;
      const auto& Vi = V[static_cast<size_t>(i)];
      const auto& Vj = V[static_cast<size_t>(cpl->j)];
      const Box bb = Box::product(Vi.region_box(v[i]), Vj.region_box(v[cpl->j]));
      std::vector<Constraint> cs = {
          {Vi.fn(0, ni + nj), -std::numeric_limits<double>::infinity(), v[i]},
          {Vj.fn(ni, ni + nj), -std::numeric_limits<double>::infinity(), v[cpl->j]}};
      const ScalarFnPtr goal = Vi.derivative_fn(0, ni + nj, cpl->g);
      const SupBound b = sup_upper_bound(goal, bb, cs, sopt, cfg.workers);
      gsum += b.value;
      if (cache) cache->coupling[key] = b.value;
      QueryRecord rec;
      rec.id = "expand/g_" + std::to_string(i) + std::to_string(cpl->j);
      rec.kind = VerdictKind::Certified;
      rec.tau = b.value;
      rec.witness_value = b.value;
      rec.boxes_explored = b.boxes_explored;
      log_record(log, std::move(rec));
    }

    // Annulus decrease: grad V_i . f_i + sum_j g_ij <= epsilon on c_i <= V_i <= v_i.
    const std::array<double, 4> akey = {static_cast<double>(i), c[i], v[i], gsum};
    bool annulus_ok;
    if (cache && cache->annulus.count(akey)) {
      annulus_ok = cache->annulus[akey];
    } else {
      const auto& Vi = V[static_cast<size_t>(i)];
      const auto& s = net.subsystem(i);
      Query q;
      q.id = "expand/annulus/sub" + std::to_string(i);
      q.goal = sum_fn({Vi.derivative_fn(0, s.dim, s.f), const_fn(gsum)});
      q.tau = epsilon;
      q.region = Vi.region_box(v[i]);
      q.constraints = {{Vi.fn(0, s.dim), c[i], v[i]}};
      q.delta = cfg.delta;
      q.max_boxes = cfg.max_boxes;
      const Verdict verdict = certify(q, cfg.workers);
      log_record(log, record_of(q.id, verdict, q.tau));
      annulus_ok = verdict.certified();
      if (cache) cache->annulus[akey] = annulus_ok;
    }
    if (!annulus_ok) {
      out.certified = false;
      out.failed_subsystem = i;
      out.reason = "expand/annulus/sub" + std::to_string(i) + ": not certified";
      return out;
    }

    if (V[static_cast<size_t>(i)].needs_shell_check()) {
      const auto shell = certify_shell(V[static_cast<size_t>(i)], i, v[i], cfg, log, "expand", cache);
      if (!shell.certified) return shell;
    }
  }
  out.certified = true;
  return out;
}

std::vector<LevelVector> expand_iteratively(const SystemNetwork& net, const VectorLyapunov& V,
                                            const LevelVector& start, const PipelineConfig& cfg,
                                            QueryLog* log) {
  std::vector<LevelVector> sequence = {start};
  if (cfg.growth - 1.0 < cfg.stop_threshold) return sequence;
  const int l = net.size();
  LevelVector c = start;
  // Per-subsystem minimization: once a subsystem's growth factor bottoms
  // out, freeze its level and keep growing the others. A frozen boundary is
  // re-certified each step (thin annulus below its level), because the
  // neighbors' sub-level sets keep enlarging the coupling bounds.
  std::vector<bool> frozen(static_cast<size_t>(l), false);
  double growth = cfg.growth;
  int iterations = 0;
  while (iterations < cfg.max_expand_iterations) {
    ++iterations;
    if (std::all_of(frozen.begin(), frozen.end(), [](bool b) { return b; })) break;
    LevelVector v = c, c_eff = c;
    for (int i = 0; i < l; ++i) {
      if (frozen[static_cast<size_t>(i)])
        c_eff[i] = (1.0 - cfg.thin_annulus) * c[i];
      else
        v[i] = growth * c[i];
    }
    const ExpandOutcome outcome = expand_levels(net, V, c_eff, v, cfg.epsilon, cfg, log);
    if (outcome.certified) {
      sequence.push_back(v);
      c = v;
      growth = cfg.growth;
      continue;
    }
    const int fi = outcome.failed_subsystem;
    if (fi < 0 || frozen[static_cast<size_t>(fi)]) break;  // a frozen boundary gave way
    const double next = 1.0 + 0.5 * (growth - 1.0);
    if (next - 1.0 < cfg.stop_threshold) {
      frozen[static_cast<size_t>(fi)] = true;
      growth = cfg.growth;
    } else {
      growth = next;
    }
  }
  return sequence;
}

namespace {

ExpandOutcome contain_one(const SubsystemLyapunov& Vi, int i, double level,
                          const Eigen::MatrixXd& P, double target, const PipelineConfig& cfg,
                          QueryLog* log) {
  ExpandOutcome out;
  const int n = Vi.domain().dim();
  if (Vi.needs_shell_check()) {
    const auto shell = certify_shell(Vi, i, level, cfg, log, "contain");
    if (!shell.certified) return shell;
  }
  Query q;
  q.id = "contain/sub" + std::to_string(i);
  q.goal = quad_form_fn(P, 0, n);
  q.tau = target + cfg.containment_tolerance;
  q.region = Vi.region_box(level);
  q.constraints = {{Vi.fn(0, n), -std::numeric_limits<double>::infinity(), level}};
  q.delta = cfg.delta;
  q.max_boxes = cfg.max_boxes;
  const Verdict v = certify(q, cfg.workers);
  log_record(log, record_of(q.id, v, q.tau));
  if (!v.certified()) {
    out.certified = false;
    out.failed_subsystem = i;
    out.reason = q.id + ": " + to_string(v.kind);
    return out;
  }
  out.certified = true;
  return out;
}

}  // namespace

ExpandOutcome check_containment(const VectorLyapunov& neural, const LevelVector& c_V,
                                const std::vector<Eigen::MatrixXd>& P, const LevelVector& p,
                                const PipelineConfig& cfg, QueryLog* log) {
  ExpandOutcome out;
  const int l = static_cast<int>(neural.size());
  for (int i = 0; i < l; ++i) {
    const auto one = contain_one(neural[static_cast<size_t>(i)], i, c_V[i],
                                 P[static_cast<size_t>(i)], p[i], cfg, log);
    if (!one.certified) return one;
  }
  out.certified = true;
  return out;
}

BisectResult bisect_scale(const SystemNetwork& net, const VectorLyapunov& neural,
                          const LevelVector& v0, const std::vector<Eigen::MatrixXd>& P,
                          const LevelVector& quad_levels, const PipelineConfig& cfg,
                          QueryLog* log) {
  BisectResult result;
  std::string last_reason;

  if (cfg.independent_scaling) {
    // One factor per subsystem: bisect each containment independently, then
    // walk failing subsystems down until the joint invariance annulus holds.
    const int l = static_cast<int>(neural.size());
    LevelVector levels(l);
    for (int i = 0; i < l; ++i) {
      auto ok = [&](double t) {
        return contain_one(neural[static_cast<size_t>(i)], i, t * v0[i],
                           P[static_cast<size_t>(i)], quad_levels[i], cfg, log)
            .certified;
      };
      double t = 0.0;
      if (ok(1.0)) {
        t = 1.0;
      } else {
        double lo = 0.0, hi = 1.0;
        while (hi - lo > cfg.bisect_tol) {
          const double mid = 0.5 * (lo + hi);
          if (ok(mid))
            lo = mid;
          else
            hi = mid;
        }
        t = lo;
      }
      if (t <= 0.0) {
        result.failure_reason =
            "containment failed at every level for subsystem " + std::to_string(i);
        return result;
      }
      levels[i] = t * v0[i];
    }
    // Below the certified containment levels the sets live inside the
    // quadratic ellipsoids; clipping the search boxes there keeps the
    // coupling sups sharp and cheap.
    VectorLyapunov clipped;
    for (int i = 0; i < l; ++i)
      clipped.push_back(neural[static_cast<size_t>(i)].restricted_to(
          ellipsoid_box(P[static_cast<size_t>(i)], quad_levels[i])));
    ExpandCache walk_cache;
    for (int attempt = 0; attempt < 60; ++attempt) {
      const LevelVector inner = (1.0 - cfg.thin_annulus) * levels;
      const auto out =
          expand_levels(net, clipped, inner, levels, cfg.epsilon, cfg, log, &walk_cache);
      if (out.certified) {
        result.levels = levels;
        result.scale = (levels.array() / v0.array()).minCoeff();
        return result;
      }
      last_reason = "invariance annulus: " + out.reason;
      if (out.failed_subsystem < 0) break;
      levels[out.failed_subsystem] *= 0.8;
      if (levels[out.failed_subsystem] < cfg.bisect_tol * v0[out.failed_subsystem]) break;
    }
    result.failure_reason = last_reason.empty() ? "no certifiable levels" : last_reason;
    return result;
  }

  auto contained_at = [&](double s) -> bool {
    const auto out = check_containment(neural, s * v0, P, quad_levels, cfg, log);
    if (!out.certified)
      last_reason = "containment at scale " + std::to_string(s) + ": " + out.reason;
    return out.certified;
  };
  ExpandCache walk_cache;
  auto invariant_at = [&](double s) -> bool {
    // Invariance of the scaled set via a thin annulus just below the level;
    // sound to clip to the quadratic ellipsoids once containment held at a
    // scale at least this large.
    VectorLyapunov clipped;
    for (size_t i = 0; i < neural.size(); ++i)
      clipped.push_back(neural[i].restricted_to(ellipsoid_box(P[i], quad_levels[i])));
    const LevelVector levels = s * v0;
    const LevelVector inner = (1.0 - cfg.thin_annulus) * levels;
    const auto out = expand_levels(net, clipped, inner, levels, cfg.epsilon, cfg, log, &walk_cache);
    if (!out.certified)
      last_reason = "invariance annulus at scale " + std::to_string(s) + ": " + out.reason;
    return out.certified;
  };

  // Containment is monotone in s (smaller sets nest), so bisect it first.
  double s_contained = 0.0;
  if (contained_at(1.0)) {
    s_contained = 1.0;
  } else {
    double lo = 0.0, hi = 1.0;
    while (hi - lo > cfg.bisect_tol) {
      const double mid = 0.5 * (lo + hi);
      if (contained_at(mid))
        lo = mid;
      else
        hi = mid;
    }
    s_contained = lo;
  }
  // The invariance annulus is not monotone (tiny levels sink below the
  // strict-decrease margin), so walk down from the contained scale.
  for (double s = s_contained; s >= cfg.bisect_tol; s *= 0.8) {
    if (invariant_at(s)) {
      result.scale = s;
      result.levels = s * v0;
      return result;
    }
  }
  result.scale = 0.0;
  result.failure_reason = last_reason.empty() ? "no certifiable scale" : last_reason;
  return result;
}

// ---------------------------------------------------------------------------
// Full pipeline

namespace {

// Largest neural level for an isolated subsystem: bisect the level on the
// containment condition (monotone), then walk down until the invariance
// annulus clears its strict-decrease floor. Zero when nothing certifies.
double isolated_neural_level(const SystemNetwork& iso, const SubsystemLyapunov& Vn,
                             const Eigen::MatrixXd& P, double quad_level,
                             const PipelineConfig& cfg, QueryLog* log) {
  const VectorLyapunov V = {Vn};
  const std::vector<Eigen::MatrixXd> Ps = {P};
  const LevelVector quad = LevelVector::Constant(1, quad_level);
  auto contained_at = [&](double level) -> bool {
    return check_containment(V, LevelVector::Constant(1, level), Ps, quad, cfg, log).certified;
  };
  ExpandCache walk_cache;
  auto invariant_at = [&](double level) -> bool {
    const VectorLyapunov clipped = {Vn.restricted_to(ellipsoid_box(P, quad_level))};
    const LevelVector lv = LevelVector::Constant(1, level);
    const LevelVector inner = (1.0 - cfg.thin_annulus) * lv;
    return expand_levels(iso, clipped, inner, lv, cfg.epsilon, cfg, log, &walk_cache).certified;
  };
  const double cap = 0.95;
  double level = 0.0;
  if (contained_at(cap)) {
    level = cap;
  } else {
    double lo = 0.0, hi = cap;
    while (hi - lo > cfg.bisect_tol * cap) {
      const double mid = 0.5 * (lo + hi);
      if (contained_at(mid))
        lo = mid;
      else
        hi = mid;
    }
    level = lo;
  }
  for (double lv = level; lv >= cfg.bisect_tol * cap; lv *= 0.8)
    if (invariant_at(lv)) return lv;
  return 0.0;
}

}  // namespace

RoaCertificate certify_network(const SystemNetwork& net,
                               const std::vector<std::shared_ptr<const Mlp>>& nets,
                               const PipelineConfig& cfg) {
  const int l = net.size();
  if (static_cast<int>(nets.size()) != l)
    throw PipelineError("certify_network: one trained network per subsystem required");

  RoaCertificate cert;
  QueryLog log;

  // Per-subsystem quadratic data.
  const auto A = linearize(net);
  std::vector<Eigen::MatrixXd> P, Q;
  for (int i = 0; i < l; ++i) {
    const int n = net.subsystem(i).dim;
    Q.push_back(cfg.q_scale * Eigen::MatrixXd::Identity(n, n));
    P.push_back(solve_lyapunov(A[static_cast<size_t>(i)], Q.back()));
  }

  // Isolated certification: quadratic levels, then neural levels v0.
  cert.isolated_quad_levels = LevelVector::Zero(l);
  cert.isolated_neural_levels = LevelVector::Zero(l);
  std::vector<SubsystemLyapunov> quadV, neuralV;
  for (int i = 0; i < l; ++i) {
    quadV.push_back(
        SubsystemLyapunov::quadratic(P[static_cast<size_t>(i)], net.subsystem(i).domain));
    neuralV.push_back(
        SubsystemLyapunov::neural(nets[static_cast<size_t>(i)], net.subsystem(i).domain));
  }
  const bool want_neural = cfg.target_stage == Stage::NeuralExpanded;
  for (int i = 0; i < l; ++i) {
    const SystemNetwork iso = net.isolated(i);
    const QuadCertificate local = local_stability(iso, LevelVector::Constant(1, 1.0), cfg, &log);
    const auto seq =
        expand_iteratively(iso, {quadV[static_cast<size_t>(i)]}, local.p, cfg, &log);
    cert.isolated_quad_levels[i] = seq.back()[0];
    if (want_neural)
      cert.isolated_neural_levels[i] = isolated_neural_level(
          iso, neuralV[static_cast<size_t>(i)], P[static_cast<size_t>(i)],
          cert.isolated_quad_levels[i], cfg, &log);
  }

  // Step 1: local stability of the interconnection.
  cert.quad = local_stability(net, cfg.initial_c_scale * cert.isolated_quad_levels, cfg, &log);
  cert.stage = Stage::LocalQuadratic;
  if (cfg.target_stage == Stage::LocalQuadratic) {
    cert.quad_levels = {cert.quad.p};
    cert.records = log.records();
    return cert;
  }

  // Step 2: quadratic reachability expansion from p.
  cert.quad_levels = expand_iteratively(net, quadV, cert.quad.p, cfg, &log);
  cert.stage = Stage::QuadraticExpanded;
  const LevelVector quad_top = cert.quad_levels.back();
  if (!want_neural) {
    cert.records = log.records();
    return cert;
  }

  // Step 3: neural containment via scale bisection, then neural expansion.
  bool have_v0 = (cert.isolated_neural_levels.array() > 0.0).all();
  if (!have_v0) {
    cert.failure_reason = "no certifiable isolated neural level";
    cert.records = log.records();
    return cert;
  }
  const BisectResult bs =
      bisect_scale(net, neuralV, cert.isolated_neural_levels, P, quad_top, cfg, &log);
  cert.neural_scale = bs.scale;
  if (bs.scale <= 0.0) {
    cert.failure_reason = bs.failure_reason;
    cert.records = log.records();
    return cert;
  }
  cert.neural_levels = expand_iteratively(net, neuralV, bs.levels, cfg, &log);
  cert.stage = Stage::NeuralExpanded;
  cert.records = log.records();
  return cert;
}

}  // namespace vlyap
