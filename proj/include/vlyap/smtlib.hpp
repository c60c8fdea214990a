#pragma once

#include <string>
#include <vector>

#include "vlyap/verify.hpp"

namespace vlyap {

struct SmtExportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Render a query as an SMT-LIB 2 script asserting the NEGATION of the
/// claim restricted to the region: unsat means the claim holds. Constants
/// are printed with 17 significant digits. Variable names default to
/// x0..x{n-1} when none are given.
std::string to_smtlib(const Query& q, std::vector<std::string> var_names = {});

void export_smtlib(const Query& q, const std::string& path,
                   std::vector<std::string> var_names = {});

}  // namespace vlyap
