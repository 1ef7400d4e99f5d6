#pragma once

#include "convfield/decompose.hpp"
#include "convfield/error.hpp"
#include "convfield/features.hpp"
#include "convfield/metrics.hpp"
#include "convfield/oracle.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace convfield {

struct RunConfig {
  std::string input_path;
  std::string output_dir = "out";
  double epsilon = 0.1;
  std::size_t max_hulls = 32;
  std::size_t k = 64;
  double tau = 0.1;
  std::size_t steps = 2000;
  std::size_t batch_size = 256;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int field_resolution = 64;
  std::uint64_t seed = 0;
  ClusterMode mode = ClusterMode::Mesh;
  double blend_weight = 0.15;
  std::size_t n_samples = 10000;  // surface samples carrying features
  double max_edge = 0.0;          // refinement in normalized units; 0 keeps the input faces
  std::size_t n_anchors = 1024;
  std::size_t n_pos_per_anchor = 64;
  std::size_t n_neg_candidates = 1024;
  std::size_t n_neg_per_triplet = 512;
  double hard_fraction = 0.5;
  std::size_t triplets_per_anchor = 16;
  LossMode loss_mode = LossMode::Contrastive;
  MetricKind metric = MetricKind::Hausdorff;
  std::size_t n_metric_samples = 20000;
  int threads = 0;  // 0: runtime default
  std::vector<double> sweep_epsilons = {0.2, 0.1, 0.05, 0.02};
};

// Throws InvalidArgument naming the first offending field.
void validate(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);
// Unknown keys are rejected; missing keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

TripletConfig triplet_config(const RunConfig& cfg);
OptimizeConfig optimize_config(const RunConfig& cfg);
DecomposeConfig decompose_config(const RunConfig& cfg);

// Load, normalize and optionally refine the input; the transform maps back
// to input coordinates.
struct PreparedShape {
  SolidMesh mesh;
  NormalizeTransform transform;
  std::vector<std::string> warnings;
};
PreparedShape prepare_shape(const RunConfig& cfg);
PreparedShape prepare_shape(const SolidMesh& raw, const RunConfig& cfg);

// Surface samples of the prepared mesh for this config.
std::vector<SurfaceSample> feature_samples(const SolidMesh& mesh, const RunConfig& cfg);

// Seed of the triplet stream for this config.
std::uint64_t triplet_seed(const RunConfig& cfg);

// Sample rows of the optimized field. Throws OracleStarvation for a shape with
// no usable triplets.
struct FeatureRun {
  std::vector<SurfaceSample> samples;
  FeatureSet features;  // one row per sample
  std::vector<double> loss_trace;
  std::size_t n_triplets = 0;
  std::size_t anchors_used = 0;
  std::size_t anchors_tried = 0;
};
FeatureRun learn_features(const SolidMesh& mesh, const RunConfig& cfg,
                          const TripletSet* triplets = nullptr);

struct HullMetrics {
  std::vector<ConcavityScore> concavity;  // per hull
  double max_concavity = 0.0;
  double reconstruction = 0.0;
};

// The numbers reported for a hull set, with the seeds the decomposition uses.
HullMetrics evaluate_hulls(const SolidMesh& mesh, const std::vector<ConvexHull>& hulls,
                           const RunConfig& cfg);

struct DecomposeOutcome {
  bool convex_shortcut = false;
  Decomposition decomposition;  // empty for the shortcut
  std::vector<ConvexHull> hulls;  // normalized coordinates
  HullMetrics metrics;
};

// Decomposition of a prepared mesh from sample features. Mirrors the
// decompose command without touching the filesystem.
DecomposeOutcome decompose_features(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                                    const FeatureSet& fs, const RunConfig& cfg);
// The whole shape as one hull: the result for an OracleStarvation shape.
DecomposeOutcome convex_shortcut(const SolidMesh& mesh, const RunConfig& cfg);

// learn_features + decompose_features, falling back to convex_shortcut on
// OracleStarvation. `triplets` is reused when given.
struct PipelineRun {
  DecomposeOutcome outcome;
  FeatureRun features;  // empty for the shortcut
  std::string shortcut_reason;
};
PipelineRun run_pipeline(const SolidMesh& mesh, const RunConfig& cfg,
                         const TripletSet* triplets = nullptr);

nlohmann::json metrics_json(const DecomposeOutcome& out, const RunConfig& cfg);

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitParse = 2,
  kExitGeometry = 3,
  kExitNonConvex = 4,
  kExitConvexShortcut = 10,
  kExitInternal = 70,
};

int exit_code_for(ErrorKind kind);
std::string error_category(ErrorKind kind);

// Commands. Each writes its artifacts plus manifest.json into
// cfg.output_dir and returns an exit code; errors propagate as Error.
int cmd_decompose(const RunConfig& cfg, const std::optional<std::filesystem::path>& features_dir = {});
int cmd_features(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);
// Metrics JSON for an externally supplied hull directory (hull_*.obj or, if
// none, every *.obj except hulls.obj), in the input's coordinates.
nlohmann::json cmd_eval(const RunConfig& cfg, const std::filesystem::path& hull_dir);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

} // namespace convfield
