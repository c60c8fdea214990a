#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "vlyap/bench.hpp"
#include "vlyap/config.hpp"
#include "vlyap/smtlib.hpp"
#include "vlyap/zubov.hpp"

namespace fs = std::filesystem;
using namespace vlyap;

namespace {

constexpr int kOk = 0;
constexpr int kGenericError = 1;
constexpr int kConfigError = 2;
constexpr int kMissingCheckpoint = 3;
constexpr int kVerificationFailure = 4;

void print_error(int code, const std::string& kind, const std::string& message,
                 int subsystem = -1) {
  nlohmann::ordered_json err;
  err["error"]["code"] = code;
  err["error"]["kind"] = kind;
  err["error"]["message"] = message;
  if (subsystem >= 0) err["error"]["subsystem"] = subsystem;
  std::cout << err.dump(2) << std::endl;
}

struct CommonFlags {
  std::string config_path;
  std::string out_override;
  int workers = 0;
  double delta = 0.0;
  double epsilon = 0.0;
  std::string stage;
  bool desk = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
  auto* opt = cmd->add_option("--config", flags.config_path, "run configuration file");
  if (config_required) opt->required();
  cmd->add_option("--out", flags.out_override, "output directory override");
  cmd->add_option("--workers", flags.workers, "verifier worker threads");
  cmd->add_option("--delta", flags.delta, "delta-completeness precision");
  cmd->add_option("--epsilon", flags.epsilon, "strict-decrease margin (negative)");
  cmd->add_option("--stage", flags.stage, "pipeline stage: local|quad|neural|all");
  cmd->add_flag("--desk", flags.desk, "desk-scale training profile");
}

RunConfig load_with_overrides(const CommonFlags& flags) {
  RunConfig cfg = load_run_config(flags.config_path);
  if (!flags.out_override.empty()) cfg.out_dir = flags.out_override;
  if (flags.workers > 0) cfg.pipeline.workers = flags.workers;
  if (flags.delta > 0.0) cfg.pipeline.delta = flags.delta;
  if (flags.epsilon != 0.0) {
    if (flags.epsilon >= 0.0) throw ConfigError("--epsilon must be negative");
    cfg.pipeline.epsilon = flags.epsilon;
  }
  if (!flags.stage.empty()) cfg.stage = flags.stage;
  if (flags.desk) {
    const ZubovConfig desk = ZubovConfig::desk(Box(), cfg.zubov.rng_seed);
    cfg.zubov.n_collocation = desk.n_collocation;
    cfg.zubov.n_data = desk.n_data;
    cfg.zubov.epochs = desk.epochs;
    cfg.zubov.learning_rate = desk.learning_rate;
  }
  if (cfg.stage != "local" && cfg.stage != "quad" && cfg.stage != "neural" && cfg.stage != "all")
    throw ConfigError("stage must be local, quad, neural or all");
  cfg.pipeline.target_stage = cfg.stage == "local"    ? Stage::LocalQuadratic
                              : cfg.stage == "quad"   ? Stage::QuadraticExpanded
                                                      : Stage::NeuralExpanded;
  return cfg;
}

std::string checkpoint_path(const RunConfig& cfg, int i) {
  return cfg.out_dir + "/checkpoint_sub" + std::to_string(i) + ".txt";
}

int cmd_train(const CommonFlags& flags) {
  const RunConfig cfg = load_with_overrides(flags);
  const SystemNetwork net = make_network(cfg);
  fs::create_directories(cfg.out_dir);
  for (int i = 0; i < net.size(); ++i) {
    ZubovConfig zc = cfg.zubov;
    zc.domain = net.subsystem(i).domain;
    zc.rng_seed = cfg.zubov.rng_seed + static_cast<std::uint64_t>(i);
    const TrainResult tr = train(net.subsystem(i).f, zc, cfg.depth, cfg.width);
    save_checkpoint(tr.net, checkpoint_path(cfg, i));
    std::ofstream log(cfg.out_dir + "/training_log_sub" + std::to_string(i) + ".csv");
    log << training_log_csv(tr.log);
    if (!tr.log.empty())
      std::cout << "subsystem " << i << ": residual " << tr.log.back().residual << ", boundary "
                << tr.log.back().boundary << ", data " << tr.log.back().data << "\n";
  }
  std::cout << "checkpoints written to " << cfg.out_dir << "\n";
  return kOk;
}

int cmd_verify(const CommonFlags& flags) {
  const RunConfig cfg = load_with_overrides(flags);
  const SystemNetwork net = make_network(cfg);

  std::vector<std::shared_ptr<const Mlp>> nets;
  std::vector<std::string> digests;
  for (int i = 0; i < net.size(); ++i) {
    const std::string path = checkpoint_path(cfg, i);
    if (!fs::exists(path)) {
      print_error(kMissingCheckpoint, "missing-checkpoint",
                  "no checkpoint for subsystem " + std::to_string(i) + " at " + path, i);
      return kMissingCheckpoint;
    }
    nets.push_back(std::make_shared<Mlp>(load_checkpoint(path)));
    std::ifstream f(path);
    std::ostringstream bytes;
    bytes << f.rdbuf();
    digests.push_back(fnv1a_digest(bytes.str()));
  }

  RoaCertificate cert;
  try {
    cert = certify_network(net, nets, cfg.pipeline);
  } catch (const PipelineError& e) {
    print_error(kVerificationFailure, "pipeline", e.what(), e.subsystem);
    return kVerificationFailure;
  }

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream f(cfg.out_dir + "/certificate.json");
    f << certificate_json(cert, fnv1a_digest(cfg.raw), digests);
  }
  {
    // Boundary clouds of the best certified level sets.
    VectorLyapunov V;
    LevelVector levels;
    if (cert.stage == Stage::NeuralExpanded && !cert.neural_levels.empty()) {
      for (int i = 0; i < net.size(); ++i)
        V.push_back(SubsystemLyapunov::neural(nets[static_cast<size_t>(i)],
                                              net.subsystem(i).domain));
      levels = cert.neural_levels.back();
    } else if (!cert.quad_levels.empty()) {
      for (int i = 0; i < net.size(); ++i)
        V.push_back(SubsystemLyapunov::quadratic(cert.quad.P[static_cast<size_t>(i)],
                                                 net.subsystem(i).domain));
      levels = cert.quad_levels.back();
    }
    if (levels.size()) {
      std::ofstream f(cfg.out_dir + "/levelsets.csv");
      f << level_set_csv(V, levels);
    }
  }

  std::cout << "stage: " << to_string(cert.stage) << "\n";
  if (cert.stage == Stage::NeuralExpanded) {
    std::cout << "neural scale: " << cert.neural_scale << "\nfinal levels:";
    for (Eigen::Index i = 0; i < cert.neural_levels.back().size(); ++i)
      std::cout << " " << cert.neural_levels.back()[i];
    std::cout << "\n";
  }
  std::cout << "certificate: " << cfg.out_dir << "/certificate.json\n";

  const bool reached = cert.stage == cfg.pipeline.target_stage && cert.failure_reason.empty();
  if (!reached) {
    print_error(kVerificationFailure, "verification",
                cert.failure_reason.empty() ? "pipeline stopped before the requested stage"
                                            : cert.failure_reason);
    return kVerificationFailure;
  }
  return kOk;
}

int cmd_bench(const CommonFlags& flags, int density, const std::string& arch_list) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = load_with_overrides(flags);
  if (!flags.out_override.empty()) cfg.out_dir = flags.out_override;
  if (flags.workers > 0) cfg.pipeline.workers = flags.workers;

  VdpNetworkSpec spec;
  ZubovConfig profile = cfg.zubov;
  if (flags.desk || density == 0) {
    spec = desk_network_spec(cfg.system_seed, cfg.coupling_cap);
    const ZubovConfig desk = ZubovConfig::desk(Box(), cfg.zubov.rng_seed);
    profile.n_collocation = desk.n_collocation;
    profile.n_data = desk.n_data;
    profile.epochs = desk.epochs;
    profile.learning_rate = desk.learning_rate;
  } else {
    spec = paper_network_spec(density);
  }
  if (cfg.coupling_scale != 1.0)
    for (auto& [i, j, m] : spec.couplings) m *= cfg.coupling_scale;

  std::vector<std::pair<int, int>> architectures;
  for (const auto& part : [&] {
         std::vector<std::string> out;
         std::string cur;
         for (char ch : arch_list) {
           if (ch == ',') {
             out.push_back(cur);
             cur.clear();
           } else {
             cur += ch;
           }
         }
         out.push_back(cur);
         return out;
       }()) {
    int d = 0, w = 0;
    if (std::sscanf(part.c_str(), "%dx%d", &d, &w) != 2 || d < 1 || w < 1) {
      print_error(kConfigError, "config", "bad architecture '" + part + "', expected DxW");
      return kConfigError;
    }
    architectures.emplace_back(d, w);
  }

  const ExperimentResult result =
      run_experiment(spec, architectures, profile, cfg.pipeline, cfg.out_dir);
  fs::create_directories(cfg.out_dir);
  std::ofstream csv(cfg.out_dir + "/results.csv");
  csv << experiment_csv(result);
  std::cout << experiment_table(result);
  std::cout << "results: " << cfg.out_dir << "/results.csv\n";
  return kOk;
}

int cmd_export_smt(const CommonFlags& flags, const std::string& selector) {
  const RunConfig cfg = load_with_overrides(flags);
  const SystemNetwork net = make_network(cfg);
  fs::create_directories(cfg.out_dir);

  QueryLog log;
  const QuadCertificate local =
      local_stability(net, LevelVector::Constant(net.size(), 1.0), cfg.pipeline, &log);
  std::vector<std::string> written;

  if (selector == "quad" || selector == "all") {
    for (int i = 0; i < net.size(); ++i) {
      const auto& s = net.subsystem(i);
      const SubsystemLyapunov V =
          SubsystemLyapunov::quadratic(local.P[static_cast<size_t>(i)], s.domain);
      Query q;
      q.id = "quad-annulus-sub" + std::to_string(i);
      q.goal = V.derivative_fn(0, s.dim, s.f);
      q.tau = cfg.pipeline.epsilon;
      q.region = V.region_box(1.2 * local.p[i]);
      q.constraints = {{V.fn(0, s.dim), local.p[i], 1.2 * local.p[i]}};
      q.delta = cfg.pipeline.delta;
      const std::string path = cfg.out_dir + "/" + q.id + ".smt2";
      export_smtlib(q, path);
      written.push_back(path);
    }
  }
  if (selector == "neural" || selector == "all") {
    for (int i = 0; i < net.size(); ++i) {
      const std::string ck = checkpoint_path(cfg, i);
      if (!fs::exists(ck)) {
        print_error(kMissingCheckpoint, "missing-checkpoint",
                    "neural query export needs a checkpoint for subsystem " + std::to_string(i),
                    i);
        return kMissingCheckpoint;
      }
      auto netp = std::make_shared<Mlp>(load_checkpoint(ck));
      const auto& s = net.subsystem(i);
      const SubsystemLyapunov V = SubsystemLyapunov::neural(netp, s.domain);
      Query q;
      q.id = "neural-containment-sub" + std::to_string(i);
      q.goal = quad_form_fn(local.P[static_cast<size_t>(i)], 0, s.dim);
      q.tau = local.p[i];
      q.region = s.domain;
      q.constraints = {
          {V.fn(0, s.dim), -std::numeric_limits<double>::infinity(), 0.5 * local.p[i]}};
      q.delta = cfg.pipeline.delta;
      const std::string path = cfg.out_dir + "/" + q.id + ".smt2";
      export_smtlib(q, path);
      written.push_back(path);
    }
  }
  if (written.empty()) {
    print_error(kConfigError, "config", "query selector must be quad, neural or all");
    return kConfigError;
  }
  for (const auto& p : written) std::cout << p << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vlyap: compositional neural Lyapunov region-of-attraction certification"};
  app.require_subcommand(1);

  CommonFlags train_flags, verify_flags, bench_flags, smt_flags;
  int bench_density = 0;
  std::string bench_arch = "2x10";
  std::string smt_selector = "quad";

  auto* train_cmd = app.add_subcommand("train", "train per-subsystem Lyapunov networks");
  add_common(train_cmd, train_flags);
  auto* verify_cmd =
      app.add_subcommand("verify", "run the compositional certification pipeline");
  add_common(verify_cmd, verify_flags);
  auto* bench_cmd = app.add_subcommand("bench", "benchmark experiment table");
  add_common(bench_cmd, bench_flags, /*config_required=*/false);
  bench_cmd->add_option("--density", bench_density, "paper benchmark density (3 or 4)");
  bench_cmd->add_option("--arch", bench_arch, "architectures, e.g. 2x20,2x30");
  auto* smt_cmd = app.add_subcommand("export-smt", "emit SMT-LIB cross-check queries");
  add_common(smt_cmd, smt_flags);
  smt_cmd->add_option("--queries", smt_selector, "quad | neural | all");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (verify_cmd->parsed()) return cmd_verify(verify_flags);
    if (bench_cmd->parsed()) return cmd_bench(bench_flags, bench_density, bench_arch);
    if (smt_cmd->parsed()) return cmd_export_smt(smt_flags, smt_selector);
  } catch (const ConfigError& e) {
    print_error(kConfigError, "config", e.what());
    return kConfigError;
  } catch (const ParseError& e) {
    print_error(kConfigError, "config", std::string("expression error: ") + e.what() + " (line " +
                                            std::to_string(e.line) + ", column " +
                                            std::to_string(e.column) + ")");
    return kConfigError;
  } catch (const PipelineError& e) {
    print_error(kVerificationFailure, "pipeline", e.what(), e.subsystem);
    return kVerificationFailure;
  } catch (const std::exception& e) {
    print_error(kGenericError, "internal", e.what());
    return kGenericError;
  }
  return kGenericError;
}
