#include "convfield/metrics.hpp"

#include "convfield/error.hpp"
#include "convfield/point_index.hpp"

#include <algorithm>
#include <cmath>

namespace convfield {

MetricKind metric_from_string(const std::string& s) {
  if (s == "hausdorff") return MetricKind::Hausdorff;
  if (s == "chamfer") return MetricKind::Chamfer;
  fail(ErrorKind::InvalidArgument, "unknown metric '" + s + "' (hausdorff|chamfer)");
}

std::string to_string(MetricKind kind) {
  return kind == MetricKind::Hausdorff ? "hausdorff" : "chamfer";
}

namespace {

double surface_tolerance(const SolidMesh& mesh) {
  return 1e-6 * mesh.diagonal();
}

bool in_solid(const SolidMesh& mesh, const Vec3& p, double tol) {
  return is_inside(mesh, p) || closest_point(mesh, p).distance <= tol;
}

struct Accumulator {
  double max = 0.0;
  double sum = 0.0;
  std::size_t n = 0;
  void add(double d) {
    max = std::max(max, d);
    sum += d;
    ++n;
  }
  double value(MetricKind kind) const {
    if (kind == MetricKind::Hausdorff) return max;
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
  }
};

} // namespace

ConcavityScore concavity(const SolidMesh& mesh, const ConvexHull& hull, std::size_t n_samples,
                         std::uint64_t seed, MetricKind kind) {
  if (n_samples == 0) fail(ErrorKind::InvalidArgument, "n_samples must be positive");
  const double tol = surface_tolerance(mesh);
  Rng rng = make_rng(seed, 0xc0c0);

  // mesh faces that can reach into the hull
  std::vector<std::uint32_t> faces;
  std::vector<double> cum;
  double mesh_area = 0.0;
  for (std::uint32_t f = 0; f < mesh.num_faces(); ++f) {
    Aabb fb;
    for (std::uint32_t v : mesh.faces()[f]) fb.extend(mesh.vertices()[v]);
    if ((fb.min.array() > hull.bounds.max.array() + tol).any() ||
        (fb.max.array() < hull.bounds.min.array() - tol).any()) {
      continue;
    }
    faces.push_back(f);
    mesh_area += mesh.face_areas()[f];
    cum.push_back(mesh_area);
  }

  // boundary samples of C, drawn from the area mixture of both sources
  std::vector<Vec3> boundary;
  boundary.reserve(n_samples);
  const double total_area = mesh_area + hull.area;
  const std::size_t budget = 50 * n_samples;
  for (std::size_t draw = 0; draw < budget && boundary.size() < n_samples; ++draw) {
    if (uniform01(rng) * total_area < mesh_area) {
      const double r = uniform01(rng) * mesh_area;
      const auto it = std::upper_bound(cum.begin(), cum.end(), r);
      const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), faces.size() - 1);
      const Face& f = mesh.faces()[faces[i]];
      const double s = std::sqrt(uniform01(rng));
      const double t = uniform01(rng);
      const Vec3 p = (1.0 - s) * mesh.vertices()[f[0]] + s * (1.0 - t) * mesh.vertices()[f[1]] +
                     s * t * mesh.vertices()[f[2]];
      if (hull_contains(hull, p, tol)) boundary.push_back(p);
    } else {
      const Vec3 p = sample_hull_surface(hull, rng);
      if (in_solid(mesh, p, tol)) boundary.push_back(p);
    }
  }

  ConcavityScore score;
  if (boundary.empty()) {
    // hull and solid only touch: nothing of the component is inside
    score.empty_interior = true;
    score.surface_h = score.volume_h = score.value = std::max(hull.bounds.extent().maxCoeff(), 0.0);
    return score;
  }
  const PointIndex boundary_index(boundary);

  // distance from a point outside C to C
  auto distance_to_piece = [&](const Vec3& q) {
    if (in_solid(mesh, q, tol)) return 0.0;
    const ClosestPoint c = closest_point(mesh, q);
    if (hull_contains(hull, c.position, tol)) return c.distance;
    return boundary_index.distance(q);
  };

  Accumulator to_hull, to_piece, volume;
  for (const Vec3& p : boundary) to_hull.add(std::max(0.0, -plane_distance(hull, p)));
  for (std::size_t i = 0; i < n_samples; ++i) to_piece.add(distance_to_piece(sample_hull_surface(hull, rng)));
  std::size_t interior_hits = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Vec3 q = sample_hull_volume(hull, rng);
    // a hit needs shared volume; samples within tol of a touching face do not count
    if (is_inside(mesh, q)) {
      ++interior_hits;
      volume.add(0.0);
    } else {
      volume.add(distance_to_piece(q));
    }
  }

  if (kind == MetricKind::Hausdorff) {
    score.surface_h = std::max(to_hull.max, to_piece.max);
    // C lies inside the hull, so only the hull-to-C direction is nonzero
    score.volume_h = volume.max;
  } else {
    score.surface_h = 0.5 * (to_hull.value(kind) + to_piece.value(kind));
    score.volume_h = 0.5 * volume.value(kind);
  }
  if (interior_hits == 0) {
    score.empty_interior = true;
    score.volume_h = 0.0;
  }
  score.value = std::max(score.surface_h, score.volume_h);
  return score;
}

double reconstruction_error(const SolidMesh& mesh, const std::vector<ConvexHull>& hulls,
                            std::size_t n_samples, std::uint64_t seed) {
  if (hulls.empty()) fail(ErrorKind::InvalidArgument, "no hulls");
  if (n_samples == 0) fail(ErrorKind::InvalidArgument, "n_samples must be positive");
  const double tol = surface_tolerance(mesh);
  Rng rng = make_rng(seed, 0x7ec0);

  auto inside_other = [&](const Vec3& p, std::size_t self) {
    for (std::size_t j = 0; j < hulls.size(); ++j) {
      if (j != self && plane_distance(hulls[j], p) < -tol) return true;
    }
    return false;
  };

  // union boundary: hull surface points not strictly inside another hull
  std::vector<double> cum;
  double area = 0.0;
  for (const ConvexHull& h : hulls) {
    area += h.area;
    cum.push_back(area);
  }
  std::vector<Vec3> boundary;
  boundary.reserve(n_samples);
  for (std::size_t draw = 0; draw < 50 * n_samples && boundary.size() < n_samples; ++draw) {
    const auto it = std::upper_bound(cum.begin(), cum.end(), uniform01(rng) * area);
    const std::size_t h = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), hulls.size() - 1);
    const Vec3 p = sample_hull_surface(hulls[h], rng);
    if (!inside_other(p, h)) boundary.push_back(p);
  }
  if (boundary.empty()) fail(ErrorKind::DegenerateHull, "union of hulls has no boundary samples");
  const PointIndex boundary_index(boundary);

  double to_union = 0.0;
  const std::vector<SurfaceSample> surface = sample_surface(mesh, n_samples, derive_seed(seed, 0x7ec1));
  for (const SurfaceSample& s : surface) {
    const Vec3& p = s.position;
    double outside = std::numeric_limits<double>::infinity();
    bool inside_any = false;
    for (const ConvexHull& h : hulls) {
      const double d = signed_distance(h, p);
      if (d <= 0.0) inside_any = true;
      outside = std::min(outside, d);
    }
    if (!inside_any) {
      to_union += outside;
      continue;
    }
    // inside: nearest facet whose foot point is on the union boundary, else
    // the nearest boundary sample
    double best = boundary_index.distance(p);
    for (std::size_t h = 0; h < hulls.size(); ++h) {
      Vec3 foot;
      const double d = signed_distance(hulls[h], p, &foot);
      if (d <= 0.0 && -d < best && !inside_other(foot, h)) best = -d;
    }
    to_union += best;
  }
  double to_mesh = 0.0;
  for (const Vec3& b : boundary) to_mesh += closest_point(mesh, b).distance;
  return 0.5 * (to_union / static_cast<double>(surface.size()) +
                to_mesh / static_cast<double>(boundary.size()));
}

} // namespace convfield
