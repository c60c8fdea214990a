#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vlyap/bench.hpp"
#include "vlyap/compose.hpp"
#include "vlyap/zubov.hpp"

namespace vlyap {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Minimal TOML-style keyed text: [dotted.section] headers, key = value
/// lines (numbers, "strings", booleans), # comments. Unknown keys are
/// rejected during validation, not parsing.
class KeyedText {
 public:
  static KeyedText parse(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_number(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<std::string> sections() const;
  std::vector<std::string> keys(const std::string& section) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

/// Fully validated run configuration: system definition (benchmark
/// reference or inline subsystems), training profile, verifier settings,
/// stage selection and output directory.
struct RunConfig {
  // [system]
  std::string benchmark;       // "desk3" | "paper3" | "paper4" | "" for inline
  std::uint64_t system_seed = 42;
  double coupling_cap = 0.03;  // desk benchmark coupling range
  double coupling_scale = 1.0; // multiplies benchmark coupling strengths
  std::vector<Subsystem> subsystems;  // inline definition
  std::vector<Coupling> couplings;

  // [train]
  int depth = 2;
  int width = 10;
  ZubovConfig zubov;           // domain is filled per subsystem at run time

  // [verify]
  PipelineConfig pipeline;
  std::string stage = "all";   // local | quad | neural | all

  // [output]
  std::string out_dir = "out";

  std::string raw;             // canonical source text, fingerprinted into certificates
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Instantiate the configured interconnection (benchmark or inline),
/// applying the coupling scale.
SystemNetwork make_network(const RunConfig& cfg);

}  // namespace vlyap
