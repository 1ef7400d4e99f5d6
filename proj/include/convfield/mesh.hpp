#pragma once

#include "convfield/random.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace convfield {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

class Bvh;

// Plain indexed triangle geometry, as read from disk.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
};

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double diagonal() const { return extent().norm(); }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
  }
};

struct SurfaceSample {
  Vec3 position;
  Vec3 normal;
  std::uint32_t face_id = 0;
};

struct RayHit {
  double t = 0.0;
  std::uint32_t face_id = 0;
  Vec3 position;
  Vec3 normal;
};

struct ClosestPoint {
  double distance = 0.0;
  std::uint32_t face_id = 0;
  Vec3 position;
};

// Watertight, consistently outward-oriented triangle surface bounding a solid,
// with a BVH for ray and distance queries. Immutable once built; every query is
// safe to call concurrently.
class SolidMesh {
 public:
  // Validates closedness (every edge shared by exactly two faces), orients
  // each shell outward and builds the accelerator. Degenerate faces
  // (area < 1e-12) are dropped first and reported through `warnings`.
  static SolidMesh from_triangles(TriangleMesh raw, std::vector<std::string>* warnings = nullptr);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<double>& face_areas() const { return face_areas_; }
  const std::vector<Vec3>& face_normals() const { return face_normals_; }
  // neighbor across edge (v[i], v[(i+1)%3]) of each face
  const std::vector<std::array<std::uint32_t, 3>>& face_neighbors() const { return face_neighbors_; }
  const std::vector<double>& cumulative_areas() const { return cumulative_areas_; }
  const Aabb& bounds() const { return bounds_; }
  double diagonal() const { return bounds_.diagonal(); }
  double total_area() const { return cumulative_areas_.empty() ? 0.0 : cumulative_areas_.back(); }
  double volume() const { return volume_; }
  std::size_t num_faces() const { return faces_.size(); }
  const Bvh& accel() const { return *accel_; }
  Vec3 face_centroid(std::uint32_t f) const;

 private:
  SolidMesh() = default;

  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<double> face_areas_;
  std::vector<Vec3> face_normals_;
  std::vector<std::array<std::uint32_t, 3>> face_neighbors_;
  std::vector<double> cumulative_areas_;
  Aabb bounds_;
  double volume_ = 0.0;
  std::shared_ptr<const Bvh> accel_;
};

enum class MeshFormat { Obj, Ply };

std::optional<MeshFormat> format_from_path(const std::filesystem::path& path);

// Parses OBJ (v/f records, 1-based or negative indices, polygons fan-triangulated)
// or PLY (ascii / binary_little_endian / binary_big_endian). Throws Parse.
TriangleMesh read_triangles(const std::filesystem::path& path, MeshFormat format);
TriangleMesh parse_obj(const std::string& text);

// Merges bit-identical vertex positions and remaps faces.
TriangleMesh deduplicate_vertices(const TriangleMesh& mesh);

// read_triangles + deduplicate_vertices + SolidMesh::from_triangles. Does not
// normalize. Throws Parse or NonManifold.
SolidMesh load_mesh(const std::filesystem::path& path, MeshFormat format,
                    std::vector<std::string>* warnings = nullptr);

void write_obj(const std::filesystem::path& path, const std::vector<Vec3>& vertices,
               const std::vector<Face>& faces, const std::string& header = {});

struct NormalizeTransform {
  Vec3 center = Vec3::Zero();  // original bbox center
  double scale = 1.0;          // normalized = (p - center) * scale
};

// Uniform scale + translation: bbox center to the origin, longest extent to 2.
// Throws DegenerateGeometry when every extent is zero.
SolidMesh normalize(const SolidMesh& mesh, NormalizeTransform* transform = nullptr);

// Longest-edge bisection until no edge exceeds max_edge. Keeps the surface
// watertight and the geometry unchanged.
SolidMesh refine(const SolidMesh& mesh, double max_edge);

// Area-uniform surface samples; deterministic for a fixed seed.
std::vector<SurfaceSample> sample_surface(const SolidMesh& mesh, std::size_t count,
                                          std::uint64_t seed);
SurfaceSample sample_surface_point(const SolidMesh& mesh, Rng& rng);

// Self-intersection offset for rays leaving the surface: 1e-5 * bbox diagonal.
double default_ray_epsilon(const SolidMesh& mesh);

// Nearest hit with t in (t_min, t_max]; equal t resolves to the lower face id.
std::optional<RayHit> cast_ray(const SolidMesh& mesh, const Vec3& origin, const Vec3& direction,
                               double t_min, double t_max);
std::optional<RayHit> cast_ray(const SolidMesh& mesh, const Vec3& origin, const Vec3& direction);
// Same contract, testing every triangle with no acceleration structure.
std::optional<RayHit> cast_ray_brute_force(const SolidMesh& mesh, const Vec3& origin,
                                           const Vec3& direction, double t_min, double t_max);
// True if any triangle is hit with t in (t_min, t_max).
bool ray_blocked(const SolidMesh& mesh, const Vec3& origin, const Vec3& direction, double t_min,
                 double t_max);

// Distinct surface crossings along the ray with t > t_min.
std::size_t count_crossings(const SolidMesh& mesh, const Vec3& origin, const Vec3& direction,
                            double t_min);

// Ray parity, majority vote over three fixed non-axis-aligned directions.
bool is_inside(const SolidMesh& mesh, const Vec3& point);

ClosestPoint closest_point(const SolidMesh& mesh, const Vec3& point);

struct VolumeSampleStats {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  double acceptance() const {
    return attempts == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempts);
  }
};

// Rejection sampling in the bounding box filtered by is_inside. Throws
// LowAcceptance when the acceptance ratio is below 1e-4 after 1e5 draws.
std::vector<Vec3> sample_volume(const SolidMesh& mesh, std::size_t count, std::uint64_t seed,
                                VolumeSampleStats* stats = nullptr);

Vec3 random_unit_vector(Rng& rng);

} // namespace convfield
