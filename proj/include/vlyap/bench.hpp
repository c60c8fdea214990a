#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlyap/compose.hpp"
#include "vlyap/zubov.hpp"

namespace vlyap {

/// Networked reversed Van der Pol benchmark:
///   x_i1' = -x_i2
///   x_i2' =  x_i1 - mu_i (1 - x_i1^2) x_i2 + sum_j mu_ij x_i1 x_j2.
struct VdpNetworkSpec {
  int l = 0;
  std::vector<double> mu;                               // mu_i in (0.5, 2.5)
  std::vector<std::tuple<int, int, double>> couplings;  // (i, j, mu_ij), |mu_ij| < 0.1
  int density = 0;                                      // max in-neighbors per node
  std::uint64_t rng_seed = 0;
};

/// Subsystem training/verification domain used throughout the benchmark.
Box vdp_domain();

/// The ten-oscillator benchmark with the published parameter list and the
/// fixed edge lists of the two studied topologies (19 directed edges at
/// density 3, 24 at density 4). Interconnection strengths are drawn
/// uniformly from (-0.1, 0.1) with the documented seed (42), since only
/// their range is published.
VdpNetworkSpec paper_network_spec(int density);

/// Desk-scale three-oscillator ring with the first three mu values and
/// coupling strengths capped at |mu_ij| <= 0.05.
VdpNetworkSpec desk_network_spec(std::uint64_t seed = 42, double coupling_cap = 0.03);

/// Random topology with per-node in-degree < density.
VdpNetworkSpec random_network_spec(int l, int density, std::uint64_t seed);

SystemNetwork build_network(const VdpNetworkSpec& spec);

struct ExperimentRow {
  int density = 0;
  int depth = 0;
  int width = 0;
  double scale = 0.0;
  LevelVector levels;       // final per-subsystem sub-level values (empty on failure)
  double wall_seconds = 0.0;
  std::string certificate_path;
  std::string failure_reason;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
};

/// Train one network per subsystem for each architecture, run the
/// compositional pipeline, and record one table row per architecture.
/// Failures are recorded in the row, never thrown.
ExperimentResult run_experiment(const VdpNetworkSpec& spec,
                                const std::vector<std::pair<int, int>>& architectures,
                                const ZubovConfig& train_profile, const PipelineConfig& pipeline,
                                const std::string& output_dir);

std::string experiment_csv(const ExperimentResult& result);
std::string experiment_table(const ExperimentResult& result);

/// Boundary point cloud of {V_i = level} for 2-D subsystems: radial
/// bisection along rays from the origin. Rows: subsystem,x1,x2.
std::string level_set_csv(const VectorLyapunov& V, const LevelVector& levels, int points_per_set = 256);

/// Certificate document with full provenance. Wall-clock data lives in a
/// separate "timing" section so reruns are byte-identical elsewhere.
std::string certificate_json(const RoaCertificate& cert, const std::string& config_digest,
                             const std::vector<std::string>& checkpoint_digests);

/// FNV-1a digest used to fingerprint configs and checkpoints.
std::string fnv1a_digest(const std::string& bytes);

}  // namespace vlyap
