#pragma once

#include "convfield/oracle.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace convfield {

// One unit-norm k-vector per row. Row i belongs to TripletSet::points[i].
struct FeatureSet {
  std::size_t n = 0;
  std::size_t k = 0;
  double tau = 0.1;
  std::vector<double> data;  // row-major n x k

  double* row(std::size_t i) { return data.data() + i * k; }
  const double* row(std::size_t i) const { return data.data() + i * k; }
  double dot(std::size_t i, std::size_t j) const;
};

enum class LossMode { Contrastive, Plain };

struct LossReport {
  double total = 0.0;
  std::vector<double> per_triplet;
  double grad_norm = 0.0;
};

double similarity(const double* u, const double* v, std::size_t k, double tau);

// Symmetric two-term InfoNCE with summed negatives, in log-sum-exp form.
double contrastive_loss(const FeatureSet& fs, const Triplet& t);
// 1/2 (-f_x.f_p + mean_n f_x.f_n)
double plain_loss(const FeatureSet& fs, const Triplet& t);
double triplet_loss(const FeatureSet& fs, const Triplet& t, LossMode mode);

// Batch-mean loss and its gradient (n x k, row-major) projected onto each
// row's tangent plane. Per-triplet terms may be evaluated in parallel; the
// scatter into `grad` runs in batch order, so results do not depend on the
// thread count. `touched` receives the rows with nonzero gradient, sorted.
LossReport loss_gradient(const FeatureSet& fs, const std::vector<Triplet>& triplets,
                         const std::vector<std::uint32_t>& batch, LossMode mode,
                         std::vector<double>& grad, std::vector<std::uint32_t>* touched = nullptr);

struct OptimizeConfig {
  std::size_t k = 64;
  double tau = 0.1;
  std::size_t steps = 2000;
  std::size_t batch_size = 256;
  double learning_rate = 0.05;
  double momentum = 0.9;
  LossMode loss_mode = LossMode::Contrastive;
  int field_resolution = 64;
  std::uint64_t seed = 0;
};

struct OptimizeResult {
  FeatureSet features;
  std::vector<double> node_features;  // Triplane nodes x k
  std::vector<double> loss_trace;  // batch loss per step
};

// Three axis-aligned feature planes (xy, xz, yz) over a cube. A point's
// feature is the normalized sum of its bilinear lookups in the three planes.
struct Triplane {
  static constexpr int kStencil = 12;
  using Ids = std::array<std::uint32_t, kStencil>;
  using Weights = std::array<double, kStencil>;

  int resolution = 64;  // cells per axis
  Vec3 origin = Vec3::Zero();
  double spacing = 0.0;

  static Triplane covering(const Aabb& box, int resolution);
  std::size_t nodes_per_plane() const;
  std::size_t num_nodes() const;
  // Node ids and weights of p (clamped into the cube), four per plane.
  void stencil(const Vec3& p, Ids& ids, Weights& w) const;
  // Plane index and in-plane position (third coordinate 0) of a node.
  int node_plane(std::uint32_t id) const;
  Vec3 node_position(std::uint32_t id) const;
};

// Row features of `points` from node vectors (num_nodes x k). `norms`
// receives the pre-normalization lengths.
FeatureSet interpolate_field(const Triplane& field, const std::vector<SurfaceSample>& points,
                             const std::vector<double>& node_features, std::size_t k, double tau,
                             std::vector<double>* norms = nullptr);

// The optimized variables are the node vectors of a Triplane over the mesh
// bounds, so nearby points share parameters as in a continuous field. Nodes
// get momentum descent on the sphere with cosine learning-rate decay; the
// row gradient from loss_gradient is pulled back through the blend. Row
// features are rounded to float32 so a reload reproduces them.
OptimizeResult optimize_single_shape(const SolidMesh& mesh, const TripletSet& set,
                                     const OptimizeConfig& config);

FeatureSet random_features(std::size_t n, std::size_t k, double tau, Rng& rng);
void normalize_rows(FeatureSet& fs);

// Top-3 principal components rescaled to [0,1] per channel; a channel with
// no variance is 0.5.
std::vector<std::array<double, 3>> pca_colors(const FeatureSet& fs);

// features.bin holds n*k little-endian float32; the sidecar JSON carries
// shape and provenance.
struct FeatureSidecar {
  std::size_t k = 0;
  double tau = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_surface = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_trace;
};
void write_features(const std::filesystem::path& bin, const std::filesystem::path& sidecar,
                    const FeatureSet& fs, const FeatureSidecar& meta);
FeatureSet read_features(const std::filesystem::path& bin, const std::filesystem::path& sidecar,
                         FeatureSidecar* meta = nullptr);

// Binary PLY point cloud with per-point RGB.
void write_colored_points(const std::filesystem::path& path, const std::vector<SurfaceSample>& points,
                          const std::vector<std::array<double, 3>>& colors);

} // namespace convfield
