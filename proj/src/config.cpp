#include "vlyap/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace vlyap {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Split "a ; b ; c" into trimmed pieces.
std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace

KeyedText KeyedText::parse(const std::string& text) {
  KeyedText kt;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quotes.
    std::string stripped;
    bool quoted = false;
    for (char c : line) {
      if (c == '"') quoted = !quoted;
      if (c == '#' && !quoted) break;
      stripped += c;
    }
    stripped = trim(stripped);
    if (stripped.empty()) continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      kt.values_[section];
      continue;
    }
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    auto& sec = kt.values_[section];
    if (sec.count(key))
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    sec[key] = value;
  }
  return kt;
}

bool KeyedText::has(const std::string& section, const std::string& key) const {
  auto it = values_.find(section);
  return it != values_.end() && it->second.count(key) > 0;
}

std::string KeyedText::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
  auto it = values_.find(section);
  if (it == values_.end()) return fallback;
  auto kv = it->second.find(key);
  return kv == it->second.end() ? fallback : kv->second;
}

double KeyedText::get_number(const std::string& section, const std::string& key,
                             double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_string(section, key, "");
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("key '" + section + "." + key + "': expected a number, got '" + v + "'");
  return d;
}

bool KeyedText::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_string(section, key, "");
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("key '" + section + "." + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::string> KeyedText::sections() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : values_) out.push_back(name);
  return out;
}

std::vector<std::string> KeyedText::keys(const std::string& section) const {
  std::vector<std::string> out;
  auto it = values_.find(section);
  if (it == values_.end()) return out;
  for (const auto& [k, _] : it->second) out.push_back(k);
  return out;
}

namespace {

const std::set<std::string> kSystemKeys = {"benchmark", "seed", "coupling_cap", "coupling_scale"};
const std::set<std::string> kTrainKeys = {"depth",  "width",         "alpha", "collocation",
                                          "data",   "batch",         "epochs", "learning_rate", "final_learning_rate",
                                          "seed",   "psi",           "c1",    "c2",
                                          "horizon", "time_step",    "converge_tol"};
const std::set<std::string> kVerifyKeys = {"delta",        "epsilon",        "max_boxes",
                                           "sup_max_boxes", "expand_sup_max_boxes", "sup_rel_tol", "sup_abs_tol",   "workers",
                                           "growth",       "stop_threshold", "bisect_tol",
                                           "q_scale",      "max_expand_iterations",
                                           "initial_c_scale", "independent_scaling"};
const std::set<std::string> kOutputKeys = {"dir"};
const std::set<std::string> kSubsystemKeys = {"vars", "f", "domain"};
const std::set<std::string> kCouplingKeys = {"g"};

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

void validate_keys(const KeyedText& kt) {
  for (const auto& section : kt.sections()) {
    const std::set<std::string>* allowed = nullptr;
    if (section == "system")
      allowed = &kSystemKeys;
    else if (section == "train")
      allowed = &kTrainKeys;
    else if (section == "verify")
      allowed = &kVerifyKeys;
    else if (section == "output")
      allowed = &kOutputKeys;
    else if (starts_with(section, "subsystem."))
      allowed = &kSubsystemKeys;
    else if (starts_with(section, "coupling."))
      allowed = &kCouplingKeys;
    else
      throw ConfigError("unknown section [" + section + "]");
    for (const auto& key : kt.keys(section))
      if (!allowed->count(key))
        throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
  }
}

Box parse_domain(const std::string& text, int dim) {
  const auto parts = split(text, ';');
  if (static_cast<int>(parts.size()) != dim)
    throw ConfigError("domain must list one 'lo hi' pair per state variable");
  std::vector<Interval> dims;
  for (const auto& p : parts) {
    std::istringstream in(p);
    double lo, hi;
    if (!(in >> lo >> hi) || lo > hi) throw ConfigError("bad domain interval '" + p + "'");
    dims.push_back({lo, hi});
  }
  return Box(std::move(dims));
}

void parse_inline_system(const KeyedText& kt, RunConfig& cfg) {
  // Subsystems are [subsystem.N] with 1-based dense ids.
  std::vector<std::pair<int, std::string>> sub_sections;
  for (const auto& section : kt.sections()) {
    if (!starts_with(section, "subsystem.")) continue;
    const std::string idx = section.substr(std::string("subsystem.").size());
    char* end = nullptr;
    const long id = std::strtol(idx.c_str(), &end, 10);
    if (end == idx.c_str() || *end != '\0' || id < 1)
      throw ConfigError("bad subsystem id in [" + section + "]");
    sub_sections.emplace_back(static_cast<int>(id), section);
  }
  std::sort(sub_sections.begin(), sub_sections.end());
  for (size_t k = 0; k < sub_sections.size(); ++k)
    if (sub_sections[k].first != static_cast<int>(k) + 1)
      throw ConfigError("subsystem ids must be dense starting at 1");

  std::vector<std::vector<std::string>> var_names;
  for (const auto& [id, section] : sub_sections) {
    const std::string vars = kt.get_string(section, "vars", "");
    const std::string f = kt.get_string(section, "f", "");
    const std::string domain = kt.get_string(section, "domain", "");
    if (vars.empty() || f.empty() || domain.empty())
      throw ConfigError("[" + section + "] needs vars, f and domain");
    std::istringstream vin(vars);
    std::vector<std::string> names;
    std::string name;
    while (vin >> name) names.push_back(name);
    if (names.empty()) throw ConfigError("[" + section + "]: no variables");
    Subsystem s;
    s.dim = static_cast<int>(names.size());
    for (const auto& comp : split(f, ';')) s.f.push_back(parse_expression(comp, names));
    if (static_cast<int>(s.f.size()) != s.dim)
      throw ConfigError("[" + section + "]: f must list one component per variable");
    s.domain = parse_domain(domain, s.dim);
    cfg.subsystems.push_back(std::move(s));
    var_names.push_back(std::move(names));
  }

  for (const auto& section : kt.sections()) {
    if (!starts_with(section, "coupling.")) continue;
    const auto parts = split(section.substr(std::string("coupling.").size()), '.');
    if (parts.size() != 2) throw ConfigError("coupling sections are [coupling.I.J]");
    const int i = std::atoi(parts[0].c_str()) - 1;
    const int j = std::atoi(parts[1].c_str()) - 1;
    if (i < 0 || j < 0 || i >= static_cast<int>(cfg.subsystems.size()) ||
        j >= static_cast<int>(cfg.subsystems.size()) || i == j)
      throw ConfigError("coupling indices out of range in [" + section + "]");
    const std::string g = kt.get_string(section, "g", "");
    if (g.empty()) throw ConfigError("[" + section + "] needs g");
    // Coupling variables: subsystem i names as-is, subsystem j names with
    // x->y prefix swap convention: declared as the i-names then y1..y_nj.
    std::vector<std::string> names = var_names[static_cast<size_t>(i)];
    for (int k = 0; k < cfg.subsystems[static_cast<size_t>(j)].dim; ++k)
      names.push_back("y" + std::to_string(k + 1));
    Coupling c;
    c.i = i;
    c.j = j;
    for (const auto& comp : split(g, ';')) c.g.push_back(parse_expression(comp, names));
    if (static_cast<int>(c.g.size()) != cfg.subsystems[static_cast<size_t>(i)].dim)
      throw ConfigError("[" + section + "]: g must list one component per state of subsystem " +
                        std::to_string(i + 1));
    cfg.couplings.push_back(std::move(c));
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  const KeyedText kt = KeyedText::parse(text);
  validate_keys(kt);

  RunConfig cfg;
  cfg.raw = text;
  cfg.benchmark = kt.get_string("system", "benchmark", "");
  cfg.system_seed = static_cast<std::uint64_t>(kt.get_number("system", "seed", 42));
  cfg.coupling_cap = kt.get_number("system", "coupling_cap", 0.03);
  cfg.coupling_scale = kt.get_number("system", "coupling_scale", 1.0);
  if (!cfg.benchmark.empty() && cfg.benchmark != "desk3" && cfg.benchmark != "paper3" &&
      cfg.benchmark != "paper4")
    throw ConfigError("unknown benchmark '" + cfg.benchmark + "'");

  parse_inline_system(kt, cfg);
  if (cfg.benchmark.empty() && cfg.subsystems.empty())
    throw ConfigError("config defines neither a benchmark nor inline subsystems");
  if (!cfg.benchmark.empty() && !cfg.subsystems.empty())
    throw ConfigError("config defines both a benchmark and inline subsystems");
  if (cfg.subsystems.size() == 1 && !cfg.couplings.empty())
    throw ConfigError("couplings need at least two subsystems");
  if (!cfg.subsystems.empty() && cfg.coupling_scale != 1.0)
    throw ConfigError("coupling_scale applies to benchmark systems only");

  cfg.depth = static_cast<int>(kt.get_number("train", "depth", 2));
  cfg.width = static_cast<int>(kt.get_number("train", "width", 10));
  if (cfg.depth < 1 || cfg.width < 1) throw ConfigError("train.depth/width must be positive");
  cfg.zubov.alpha = kt.get_number("train", "alpha", 0.1);
  cfg.zubov.n_collocation = static_cast<int>(kt.get_number("train", "collocation", 300000));
  cfg.zubov.n_data = static_cast<int>(kt.get_number("train", "data", 3000));
  cfg.zubov.batch_size = static_cast<int>(kt.get_number("train", "batch", 32));
  cfg.zubov.epochs = static_cast<int>(kt.get_number("train", "epochs", 20));
  cfg.zubov.learning_rate = kt.get_number("train", "learning_rate", 0.001);
  cfg.zubov.final_learning_rate = kt.get_number("train", "final_learning_rate", 0.0);
  cfg.zubov.rng_seed = static_cast<std::uint64_t>(kt.get_number("train", "seed", 42));
  cfg.zubov.c1 = kt.get_number("train", "c1", -1.0);
  cfg.zubov.c2 = kt.get_number("train", "c2", -1.0);
  cfg.zubov.horizon = kt.get_number("train", "horizon", 50.0);
  cfg.zubov.time_step = kt.get_number("train", "time_step", 0.01);
  cfg.zubov.converge_tol = kt.get_number("train", "converge_tol", 1e-3);
  const std::string psi = kt.get_string("train", "psi", "quadratic");
  if (psi == "quadratic")
    cfg.zubov.psi = PsiKind::Quadratic;
  else if (psi == "linear")
    cfg.zubov.psi = PsiKind::Linear;
  else
    throw ConfigError("train.psi must be quadratic or linear");

  cfg.pipeline.delta = kt.get_number("verify", "delta", 1e-4);
  cfg.pipeline.epsilon = kt.get_number("verify", "epsilon", -1e-3);
  if (cfg.pipeline.epsilon >= 0.0) throw ConfigError("verify.epsilon must be negative");
  cfg.pipeline.max_boxes = static_cast<long>(kt.get_number("verify", "max_boxes", 1e6));
  cfg.pipeline.sup_max_boxes = static_cast<long>(kt.get_number("verify", "sup_max_boxes", 2e5));
  cfg.pipeline.expand_sup_max_boxes =
      static_cast<long>(kt.get_number("verify", "expand_sup_max_boxes", 2e5));
  cfg.pipeline.sup_rel_tol = kt.get_number("verify", "sup_rel_tol", 0.05);
  cfg.pipeline.sup_abs_tol = kt.get_number("verify", "sup_abs_tol", 1e-4);
  cfg.pipeline.workers = static_cast<int>(kt.get_number("verify", "workers", 1));
  cfg.pipeline.growth = kt.get_number("verify", "growth", 1.2);
  cfg.pipeline.stop_threshold = kt.get_number("verify", "stop_threshold", 0.02);
  cfg.pipeline.bisect_tol = kt.get_number("verify", "bisect_tol", 0.01);
  cfg.pipeline.q_scale = kt.get_number("verify", "q_scale", 1.0);
  cfg.pipeline.max_expand_iterations =
      static_cast<int>(kt.get_number("verify", "max_expand_iterations", 40));
  cfg.pipeline.initial_c_scale = kt.get_number("verify", "initial_c_scale", 0.5);
  cfg.pipeline.independent_scaling = kt.get_bool("verify", "independent_scaling", false);

  cfg.out_dir = kt.get_string("output", "dir", "out");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_run_config(buf.str());
}

SystemNetwork make_network(const RunConfig& cfg) {
  if (!cfg.benchmark.empty()) {
    VdpNetworkSpec spec;
    if (cfg.benchmark == "desk3")
      spec = desk_network_spec(cfg.system_seed, cfg.coupling_cap);
    else
      spec = paper_network_spec(cfg.benchmark == "paper3" ? 3 : 4);
    if (cfg.coupling_scale != 1.0)
      for (auto& [i, j, m] : spec.couplings) m *= cfg.coupling_scale;
    return build_network(spec);
  }
  return SystemNetwork(cfg.subsystems, cfg.couplings);
}

}  // namespace vlyap
