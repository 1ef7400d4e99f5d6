#pragma once

#include "convfield/mesh.hpp"
#include "convfield/random.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace convfield {

// Endpoint tolerance of the segment test: 1e-4 of the bounding-box diagonal.
double segment_epsilon(const SolidMesh& mesh);

// True when the segment ab stays inside the solid: no surface hit strictly
// between the endpoints (beyond segment_epsilon of either), and the midpoint
// is inside or on the surface. A segment lying in a face plane is tested
// eps inside the solid instead. Symmetric in (a, b) bit for bit.
bool is_convex_pair(const SolidMesh& mesh, const Vec3& a, const Vec3& b);

// Positive partner: exit point of a ray shot into the solid from the anchor,
// direction uniform over the inward hemisphere. Exits closer than 1e-3 are
// redrawn; at most `tries` rays.
std::optional<SurfaceSample> sample_positive(const SolidMesh& mesh, const SurfaceSample& anchor,
                                             int tries, Rng& rng);

inline constexpr double kNegativeMinDistance = 0.02;

// Hard-negative weight 1 / max(d, d_min)^2.
double negative_weight(const Vec3& anchor, const Vec3& candidate,
                       double d_min = kNegativeMinDistance);

// Draws indices with probability proportional to fixed non-negative weights.
class WeightedSampler {
 public:
  explicit WeightedSampler(const std::vector<double>& weights);
  std::uint32_t draw(Rng& rng) const;

 private:
  std::vector<double> cumulative_;
};

// `count` weighted indices without replacement (largest log(u)/w keys).
std::vector<std::uint32_t> weighted_choice_without_replacement(const std::vector<double>& weights,
                                                               std::size_t count, Rng& rng);

// Distinct pool members nonconvex with the anchor, drawn with probability
// proportional to negative_weight. Stops after `count` hits or
// 4 * pool.size() draws, so it may return fewer.
std::vector<SurfaceSample> sample_negatives(const SolidMesh& mesh, const SurfaceSample& anchor,
                                            const std::vector<SurfaceSample>& pool,
                                            std::size_t count, Rng& rng);

struct TripletConfig {
  std::size_t n_anchors = 1024;
  std::size_t n_pos_per_anchor = 64;
  std::size_t n_neg_candidates = 1024;
  std::size_t n_neg_per_triplet = 512;
  double hard_fraction = 0.5;
  std::size_t triplets_per_anchor = 1;
  int positive_tries = 8;
  // at most factor * n_neg_candidates samples are tested per anchor
  std::size_t candidate_scan_factor = 4;
};

// Rows refer to TripletSet::points.
struct Triplet {
  std::uint32_t anchor = 0;
  std::uint32_t positive = 0;
  std::vector<std::uint32_t> negatives;
};

struct TripletSet {
  // The surface samples followed by the accepted positive exit points; one
  // feature row per entry.
  std::vector<SurfaceSample> points;
  std::size_t n_surface = 0;
  std::vector<Triplet> triplets;
  std::size_t anchors_used = 0;
  std::size_t anchors_tried = 0;
};

// Anchors are the first n_anchors samples; negatives come from the whole
// sample list. Each anchor draws from its own RNG stream, so the result does
// not depend on the thread count. Throws OracleStarvation when fewer than 10%
// of anchors produce a triplet.
TripletSet build_triplets(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                          const TripletConfig& config, std::uint64_t seed);

// Binary triplet dump: "CVFTRIP\0", u32 version, u32 count, then per triplet
// anchor, positive (6 float32: position, normal each), u32 n, n negatives.
// Little endian.
struct TripletRecord {
  SurfaceSample anchor;
  SurfaceSample positive;
  std::vector<SurfaceSample> negatives;
};
void write_triplets(const std::filesystem::path& path, const TripletSet& set);
std::vector<TripletRecord> read_triplets(const std::filesystem::path& path);

} // namespace convfield
