#pragma once

#include "convfield/features.hpp"
#include "convfield/hull.hpp"
#include "convfield/mesh.hpp"
#include "convfield/metrics.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace convfield {

enum class ClusterMode { Mesh, PointCloud };

ClusterMode cluster_mode_from_string(const std::string& s);
std::string to_string(ClusterMode mode);

// Why a leaf was accepted.
enum class LeafFlag {
  None,         // concavity below epsilon
  CapReached,   // splitting would exceed max_hulls
  Indivisible,  // a single face / point, or nothing left to separate
  NoProgress,   // three generations without a 1% concavity drop
  Flushed,      // still queued when the loop stopped
};

std::string to_string(LeafFlag flag);

struct Component {
  int id = 0;
  int parent = -1;
  int generation = 0;
  std::vector<std::uint32_t> sample_ids;
  std::vector<std::uint32_t> face_ids;  // mesh mode only
  ConvexHull hull;
  ConcavityScore concavity;
  LeafFlag flag = LeafFlag::None;
  bool is_leaf = false;
  int stall = 0;  // consecutive generations without progress
  std::vector<int> children;
};

struct DecomposeConfig {
  double epsilon = 0.1;
  std::size_t max_hulls = 32;
  ClusterMode mode = ClusterMode::Mesh;
  double blend_weight = 0.15;
  MetricKind metric = MetricKind::Hausdorff;
  std::size_t n_metric_samples = 20000;
  std::uint64_t seed = 0;
};

struct TraceEvent {
  enum Kind { Pop, Push } kind = Pop;
  int component = 0;
  double concavity = 0.0;
};

struct Decomposition {
  std::vector<Component> nodes;  // every tree node, indexed by id
  std::vector<int> leaves;       // ids in acceptance order
  double epsilon = 0.0;
  std::size_t max_hulls = 0;
  std::vector<TraceEvent> trace;

  double max_concavity() const;
  std::vector<ConvexHull> leaf_hulls() const;
};

// Scores keyed by the component's face (mesh mode) or sample set; lets a
// sweep reuse work across thresholds. Scores only depend on the hull.
struct ScoreCache {
  std::map<std::vector<std::uint32_t>, std::pair<ConvexHull, ConcavityScore>> entries;
};

// Holds the per-face features and adjacency the splits reuse.
class Splitter {
 public:
  // `fs` rows are parallel to `samples`.
  Splitter(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples, const FeatureSet& fs,
           ClusterMode mode, double blend_weight);

  // Throws Indivisible when the component cannot be cut in two.
  std::pair<Component, Component> split(const Component& c, Rng& rng) const;

  // Per-face unit features (sample mean, inherited when a face has none).
  const std::vector<Vec3>& face_centroids() const { return centroids_; }
  const std::vector<double>& face_features() const { return face_features_; }

 private:
  std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> split_faces(
      const std::vector<std::uint32_t>& faces) const;
  std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> split_points(
      const std::vector<std::uint32_t>& ids, Rng& rng) const;
  std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> balanced_bfs(
      const std::vector<std::uint32_t>& faces) const;

  const SolidMesh& mesh_;
  const std::vector<SurfaceSample>& samples_;
  const FeatureSet& fs_;
  ClusterMode mode_;
  double blend_weight_;
  std::size_t k_;
  std::vector<double> face_features_;  // unit rows, num_faces x k
  std::vector<Vec3> centroids_;
  std::vector<std::vector<std::uint32_t>> face_samples_;
};

std::pair<Component, Component> binary_split(const SolidMesh& mesh,
                                             const std::vector<SurfaceSample>& samples,
                                             const FeatureSet& fs, const Component& c,
                                             ClusterMode mode, double blend_weight, Rng& rng);

// The whole shape as one component (no hull or score yet).
Component root_component(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                         ClusterMode mode);

// Hull of the component: its face vertices in mesh mode, its samples otherwise.
ConvexHull component_hull(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                          const Component& c, ClusterMode mode);

// Concavity-ordered recursive bisection with cap, no-progress and
// indivisibility guards. Leaves always partition the samples.
Decomposition recursive_decompose(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                                  const FeatureSet& fs, const DecomposeConfig& cfg,
                                  ScoreCache* cache = nullptr);

struct SweepRow {
  double epsilon = 0.0;
  std::size_t components = 0;
  double max_concavity = 0.0;
  double reconstruction = 0.0;
};

// One decomposition per epsilon (sorted descending) on the same features.
std::vector<Decomposition> granularity_sweep(const SolidMesh& mesh,
                                             const std::vector<SurfaceSample>& samples,
                                             const FeatureSet& fs,
                                             const std::vector<double>& epsilons,
                                             const DecomposeConfig& cfg,
                                             std::vector<SweepRow>* table = nullptr);

void write_tree_dot(const std::filesystem::path& path, const Decomposition& d);

} // namespace convfield
