#include "vlyap/bench.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace vlyap {

namespace {

using json = nlohmann::ordered_json;

const std::vector<double> kPaperMu = {1.25, 2.4, 1.96, 1.7, 0.81, 0.81, 0.62, 2.23, 1.7, 1.92};

// Directed edges a -> b (1-based): subsystem b is driven by subsystem a.
const std::vector<std::pair<int, int>> kDensity3Edges = {
    {9, 1}, {6, 2}, {9, 2}, {2, 3}, {10, 3}, {3, 4},  {9, 4},  {7, 5}, {10, 5}, {1, 6},
    {8, 6}, {3, 7}, {5, 7}, {3, 8}, {7, 8},  {2, 9},  {6, 9},  {4, 10}, {8, 10}};

const std::vector<std::pair<int, int>> kDensity4Edges = {
    {2, 1},  {10, 1}, {3, 2},  {7, 2},  {4, 3},  {8, 3},  {9, 3},  {6, 4},
    {10, 4}, {1, 5},  {3, 5},  {8, 5},  {2, 6},  {3, 6},  {10, 6}, {2, 7},
    {3, 7},  {4, 7},  {2, 8},  {5, 9},  {6, 9},  {2, 10}, {4, 10}, {5, 10}};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Box vdp_domain() { return Box({Interval{-2.5, 2.5}, Interval{-5.5, 5.5}}); }

namespace {

VdpNetworkSpec from_edges(const std::vector<std::pair<int, int>>& edges, int density,
                          std::uint64_t seed, double cap) {
  VdpNetworkSpec spec;
  spec.l = 10;
  spec.mu = kPaperMu;
  spec.density = density;
  spec.rng_seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-cap, cap);
  for (const auto& [a, b] : edges) spec.couplings.emplace_back(b - 1, a - 1, d(rng));
  return spec;
}

}  // namespace

VdpNetworkSpec paper_network_spec(int density) {
  if (density == 3) return from_edges(kDensity3Edges, 3, 42, 0.1);
  if (density == 4) return from_edges(kDensity4Edges, 4, 42, 0.1);
  throw std::invalid_argument("paper_network_spec: density must be 3 or 4");
}

VdpNetworkSpec desk_network_spec(std::uint64_t seed, double coupling_cap) {
  VdpNetworkSpec spec;
  spec.l = 3;
  spec.mu = {kPaperMu[0], kPaperMu[1], kPaperMu[2]};
  spec.density = 2;
  spec.rng_seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-coupling_cap, coupling_cap);
  spec.couplings.emplace_back(1, 0, d(rng));
  spec.couplings.emplace_back(2, 1, d(rng));
  spec.couplings.emplace_back(0, 2, d(rng));
  return spec;
}

VdpNetworkSpec random_network_spec(int l, int density, std::uint64_t seed) {
  if (l < 2 || density < 1) throw std::invalid_argument("random_network_spec: bad shape");
  VdpNetworkSpec spec;
  spec.l = l;
  spec.density = density;
  spec.rng_seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mu_d(0.55, 2.45);
  std::uniform_real_distribution<double> mu_ij(-0.1, 0.1);
  for (int i = 0; i < l; ++i) spec.mu.push_back(mu_d(rng));
  for (int i = 0; i < l; ++i) {
    const int in_degree = static_cast<int>(rng() % static_cast<std::uint64_t>(density));
    std::vector<int> others;
    for (int j = 0; j < l; ++j)
      if (j != i) others.push_back(j);
    std::shuffle(others.begin(), others.end(), rng);
    for (int k = 0; k < in_degree; ++k) spec.couplings.emplace_back(i, others[static_cast<size_t>(k)], mu_ij(rng));
  }
  return spec;
}

SystemNetwork build_network(const VdpNetworkSpec& spec) {
  if (static_cast<int>(spec.mu.size()) != spec.l)
    throw std::invalid_argument("build_network: mu list size mismatch");
  const std::vector<std::string> kXY = {"x1", "x2"};
  const std::vector<std::string> kPair = {"x1", "x2", "y1", "y2"};
  std::vector<Subsystem> subs;
  for (int i = 0; i < spec.l; ++i) {
    Subsystem s;
    s.dim = 2;
    s.domain = vdp_domain();
    s.f.push_back(parse_expression("-x2", kXY));
    s.f.push_back(parse_expression("x1 - " + fmt(spec.mu[static_cast<size_t>(i)]) +
                                       "*(1 - x1^2)*x2",
                                   kXY));
    subs.push_back(std::move(s));
  }
  std::vector<Coupling> cpls;
  for (const auto& [i, j, m] : spec.couplings) {
    Coupling c;
    c.i = i;
    c.j = j;
    c.g.push_back(parse_expression("0", kPair));
    c.g.push_back(parse_expression(fmt(m) + "*x1*y2", kPair));
    cpls.push_back(std::move(c));
  }
  return SystemNetwork(std::move(subs), std::move(cpls));
}

ExperimentResult run_experiment(const VdpNetworkSpec& spec,
                                const std::vector<std::pair<int, int>>& architectures,
                                const ZubovConfig& train_profile, const PipelineConfig& pipeline,
                                const std::string& output_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(output_dir);
  const SystemNetwork net = build_network(spec);
  ExperimentResult result;
  for (const auto& [depth, width] : architectures) {
    ExperimentRow row;
    row.density = spec.density;
    row.depth = depth;
    row.width = width;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      std::vector<std::shared_ptr<const Mlp>> nets;
      std::vector<std::string> digests;
      for (int i = 0; i < net.size(); ++i) {
        ZubovConfig zc = train_profile;
        zc.domain = net.subsystem(i).domain;
        zc.rng_seed = train_profile.rng_seed + static_cast<std::uint64_t>(i);
        const TrainResult tr = train(net.subsystem(i).f, zc, depth, width);
        std::ostringstream ck;
        write_checkpoint(tr.net, ck);
        digests.push_back(fnv1a_digest(ck.str()));
        nets.push_back(std::make_shared<Mlp>(tr.net));
      }
      const RoaCertificate cert = certify_network(net, nets, pipeline);
      row.scale = cert.neural_scale;
      if (cert.stage == Stage::NeuralExpanded && !cert.neural_levels.empty())
        row.levels = cert.neural_levels.back();
      row.failure_reason = cert.failure_reason;
      const std::string path = output_dir + "/certificate_d" + std::to_string(spec.density) +
                               "_depth" + std::to_string(depth) + "_width" +
                               std::to_string(width) + ".json";
      std::ofstream f(path);
      f << certificate_json(cert, "", digests);
      row.certificate_path = path;
    } catch (const std::exception& e) {
      row.scale = 0.0;
      row.failure_reason = e.what();
    }
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rows.push_back(std::move(row));
  }
  return result;
}

std::string experiment_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "density,depth,width,scale,sub_level_sets,wall_seconds,certificate\n";
  for (const auto& r : result.rows) {
    out << r.density << "," << r.depth << "," << r.width << "," << fmt(r.scale) << ",\"[";
    for (Eigen::Index i = 0; i < r.levels.size(); ++i)
      out << (i ? " " : "") << fmt(r.levels[i]);
    out << "]\"," << fmt(r.wall_seconds) << "," << r.certificate_path << "\n";
  }
  return out.str();
}

std::string experiment_table(const ExperimentResult& result) {
  std::ostringstream out;
  out << "density  depth  width  scale   levels / outcome\n";
  for (const auto& r : result.rows) {
    char head[64];
    std::snprintf(head, sizeof(head), "%-8d %-6d %-6d %-7.2f ", r.density, r.depth, r.width,
                  r.scale);
    out << head;
    if (r.levels.size()) {
      out << "[";
      for (Eigen::Index i = 0; i < r.levels.size(); ++i) {
        char v[16];
        std::snprintf(v, sizeof(v), "%s%.2f", i ? ", " : "", r.levels[i]);
        out << v;
      }
      out << "]";
    } else {
      out << (r.failure_reason.empty() ? "-" : r.failure_reason);
    }
    out << "\n";
  }
  return out.str();
}

std::string level_set_csv(const VectorLyapunov& V, const LevelVector& levels, int points_per_set) {
  std::ostringstream out;
  out << "subsystem,x1,x2\n";
  for (size_t i = 0; i < V.size(); ++i) {
    const auto& Vi = V[i];
    if (Vi.domain().dim() != 2) continue;
    const double level = levels[static_cast<Eigen::Index>(i)];
    for (int k = 0; k < points_per_set; ++k) {
      const double theta = 2.0 * M_PI * k / points_per_set;
      Eigen::VectorXd dir(2);
      dir << std::cos(theta), std::sin(theta);
      // Longest in-domain ray length along dir.
      double rmax = std::numeric_limits<double>::infinity();
      for (int d = 0; d < 2; ++d)
        if (std::abs(dir[d]) > 1e-12)
          rmax = std::min(rmax, (dir[d] > 0 ? Vi.domain()[d].hi : Vi.domain()[d].lo) / dir[d]);
      // First crossing of the level along the ray, then bisect.
      const int steps = 200;
      double lo = 0.0, hi = -1.0;
      for (int s = 1; s <= steps; ++s) {
        const double r = rmax * s / steps;
        if (Vi.value(r * dir) > level) {
          hi = r;
          lo = rmax * (s - 1) / steps;
          break;
        }
      }
      if (hi < 0.0) continue;  // level set exits through the domain along this ray
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (Vi.value(mid * dir) > level ? hi : lo) = mid;
      }
      const Eigen::VectorXd p = 0.5 * (lo + hi) * dir;
      out << i << "," << fmt(p[0]) << "," << fmt(p[1]) << "\n";
    }
  }
  return out.str();
}

namespace {

json matrix_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

}  // namespace

std::string certificate_json(const RoaCertificate& cert, const std::string& config_digest,
                             const std::vector<std::string>& checkpoint_digests) {
  json doc;
  doc["format"] = "vlyap-certificate";
  doc["version"] = 1;
  doc["config_digest"] = config_digest;
  doc["checkpoint_digests"] = checkpoint_digests;
  doc["stage"] = to_string(cert.stage);
  doc["failure_reason"] = cert.failure_reason;

  json quad;
  json A = json::array(), P = json::array(), Q = json::array();
  for (const auto& m : cert.quad.A) A.push_back(matrix_json(m));
  for (const auto& m : cert.quad.P) P.push_back(matrix_json(m));
  for (const auto& m : cert.quad.Q) Q.push_back(matrix_json(m));
  quad["A"] = std::move(A);
  quad["P"] = std::move(P);
  quad["Q"] = std::move(Q);
  quad["R"] = matrix_json(cert.quad.R);
  quad["Lambda"] = matrix_json(cert.quad.Lambda);
  quad["c"] = vector_json(cert.quad.c);
  quad["p"] = vector_json(cert.quad.p);
  doc["quad"] = std::move(quad);

  json qlv = json::array();
  for (const auto& lv : cert.quad_levels) qlv.push_back(vector_json(lv));
  doc["quad_levels"] = std::move(qlv);
  doc["neural_scale"] = cert.neural_scale;
  json nlv = json::array();
  for (const auto& lv : cert.neural_levels) nlv.push_back(vector_json(lv));
  doc["neural_levels"] = std::move(nlv);
  doc["isolated_quad_levels"] = vector_json(cert.isolated_quad_levels);
  doc["isolated_neural_levels"] = vector_json(cert.isolated_neural_levels);

  json queries = json::array();
  json timing = json::array();
  for (const auto& r : cert.records) {
    json q;
    q["id"] = r.id;
    q["verdict"] = to_string(r.kind);
    q["tau"] = r.tau;
    q["witness"] = vector_json(r.witness);
    q["witness_value"] = r.witness_value;
    q["boxes_explored"] = r.boxes_explored;
    queries.push_back(std::move(q));
    timing.push_back(r.wall_ms);
  }
  doc["queries"] = std::move(queries);
  doc["timing"] = {{"wall_ms", std::move(timing)}};
  return doc.dump(2) + "\n";
}

std::string fnv1a_digest(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

}  // namespace vlyap
