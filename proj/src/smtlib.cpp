#include "vlyap/smtlib.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vlyap {

namespace {

std::string decimal(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", std::abs(v));
  std::string s(buf);
  if (s.find('e') != std::string::npos || s.find('E') != std::string::npos) {
    std::snprintf(buf, sizeof(buf), "%.17f", std::abs(v));
    s = buf;
  }
  if (s.find('.') == std::string::npos) s += ".0";
  if (v < 0.0) return "(- " + s + ")";
  return s;
}

}  // namespace

std::string to_smtlib(const Query& q, std::vector<std::string> var_names) {
  const int dim = q.region.dim();
  if (var_names.empty())
    for (int i = 0; i < dim; ++i) var_names.push_back("x" + std::to_string(i));
  if (static_cast<int>(var_names.size()) != dim)
    throw SmtExportError("to_smtlib: variable name count does not match region dimension");

  SmtContext ctx;
  ctx.var_names = var_names;

  const std::string goal = q.goal->smt_term(ctx);
  std::vector<std::string> constraint_terms;
  constraint_terms.reserve(q.constraints.size());
  for (const auto& c : q.constraints) constraint_terms.push_back(c.fn->smt_term(ctx));

  std::ostringstream out;
  out << "; claim: goal <= " << decimal(q.tau) << " on the boxed region";
  if (!q.id.empty()) out << "  [" << q.id << "]";
  out << "\n; unsat certifies the claim; sat/delta-sat exhibits a counterexample\n";
  out << "(set-logic QF_NRA)\n";
  for (const auto& name : var_names) out << "(declare-fun " << name << " () Real)\n";
  out << ctx.defs.str();
  for (int i = 0; i < dim; ++i)
    out << "(assert (and (<= " << decimal(q.region[i].lo) << " " << var_names[static_cast<size_t>(i)]
        << ") (<= " << var_names[static_cast<size_t>(i)] << " " << decimal(q.region[i].hi)
        << ")))\n";
  for (size_t c = 0; c < q.constraints.size(); ++c) {
    const auto& cons = q.constraints[c];
    if (std::isfinite(cons.lo))
      out << "(assert (<= " << decimal(cons.lo) << " " << constraint_terms[c] << "))\n";
    if (std::isfinite(cons.hi))
      out << "(assert (<= " << constraint_terms[c] << " " << decimal(cons.hi) << "))\n";
  }
  out << "(assert (> " << goal << " " << decimal(q.tau) << "))\n";
  out << "(check-sat)\n(exit)\n";
  return out.str();
}

void export_smtlib(const Query& q, const std::string& path, std::vector<std::string> var_names) {
  std::ofstream f(path);
  if (!f) throw SmtExportError("cannot open for writing: " + path);
  f << to_smtlib(q, std::move(var_names));
}

}  // namespace vlyap
