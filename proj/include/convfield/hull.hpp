#pragma once

#include "convfield/mesh.hpp"
#include "convfield/random.hpp"

#include <vector>

namespace convfield {

struct ConvexHull {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;       // outward, counter-clockwise seen from outside
  std::vector<Vec3> normals;     // unit outward per face
  std::vector<double> offsets;   // inside iff normals[i].dot(p) <= offsets[i]
  std::vector<double> cumulative_areas;
  std::vector<double> cumulative_volumes;  // tetrahedra fanned from `center`
  Vec3 center = Vec3::Zero();
  Aabb bounds;
  double volume = 0.0;
  double area = 0.0;
  bool inflated = false;         // built from a slab-inflated degenerate set
};

// Quickhull. Throws DegenerateHull for fewer than 4 points or a
// (near-)coplanar set.
ConvexHull convex_hull(const std::vector<Vec3>& points);

// convex_hull, but a degenerate set is first thickened by +-1e-4 along its
// flat principal directions. Throws DegenerateHull only for an empty input.
ConvexHull convex_hull_inflated(const std::vector<Vec3>& points);

// Rebuild plane/area/volume caches from vertices + faces (e.g. a hull read
// back from OBJ). Faces are reoriented outward.
ConvexHull hull_from_mesh(std::vector<Vec3> vertices, std::vector<Face> faces);

// Max over faces of n.p - d: negative inside (minus the depth to the nearest
// facet plane), a lower bound on the distance outside.
double plane_distance(const ConvexHull& hull, const Vec3& p);
bool hull_contains(const ConvexHull& hull, const Vec3& p, double tol = 0.0);
// Exact Euclidean distance to the hull boundary (positive outside, negative
// inside) and the boundary point realizing it.
double signed_distance(const ConvexHull& hull, const Vec3& p, Vec3* closest = nullptr);

Vec3 sample_hull_surface(const ConvexHull& hull, Rng& rng, std::uint32_t* face = nullptr);
Vec3 sample_hull_volume(const ConvexHull& hull, Rng& rng);

// True when every vertex is on or behind every face plane (tolerance tol) and
// every vertex is an extreme point of the set.
bool is_convex_polytope(const std::vector<Vec3>& vertices, const std::vector<Face>& faces,
                        double tol);

} // namespace convfield
