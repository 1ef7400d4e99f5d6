#pragma once

#include "convfield/mesh.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace convfield {

// Binary SAH bounding volume hierarchy over triangles. Leaf triangles are
// stored as structure-of-arrays (v0, e1, e2) so the leaf test runs through the
// vectorized ray_triangles kernel.
class Bvh {
 public:
  static constexpr std::uint32_t kMaxLeafSize = 8;

  struct Hit {
    double t;
    std::uint32_t face_id;
  };

  Bvh(const std::vector<Vec3>& vertices, const std::vector<Face>& faces);

  std::optional<Hit> nearest_hit(const Vec3& origin, const Vec3& dir, double t_min,
                                 double t_max) const;
  bool any_hit(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const;
  // Every hit with t > t_min, unsorted.
  void all_hits(const Vec3& origin, const Vec3& dir, double t_min, std::vector<Hit>& out) const;
  ClosestPoint closest_point(const Vec3& p) const;

  // Test every triangle in original face order; reference for nearest_hit.
  std::optional<Hit> nearest_hit_brute_force(const Vec3& origin, const Vec3& dir, double t_min,
                                             double t_max) const;

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    double bmin[3];
    double bmax[3];
    std::uint32_t first;  // leaf: first triangle slot; interior: right child
    std::uint32_t count;  // 0 for interior nodes (left child is this + 1)
  };

  std::uint32_t build(std::vector<std::uint32_t>& ids, std::uint32_t begin, std::uint32_t end,
                      const std::vector<Vec3>& centroids, const std::vector<Aabb>& boxes);
  template <typename LeafFn>
  void traverse(const Vec3& origin, const Vec3& dir, double t_min, double& t_max,
                LeafFn&& leaf) const;

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> face_ids_;  // slot -> original face id
  std::vector<double> v0_[3];
  std::vector<double> e1_[3];
  std::vector<double> e2_[3];
  std::vector<std::uint32_t> slot_of_face_;
};

// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

} // namespace convfield
