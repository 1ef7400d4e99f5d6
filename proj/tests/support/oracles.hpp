#pragma once

// Reference computations written independently of the library code paths
// they check: brute-force segment tests, closed-form losses, analytic box
// distances and dense-grid samplers.

#include "convfield/features.hpp"
#include "convfield/hull.hpp"
#include "convfield/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace oracle {

using convfield::Vec3;

// Segment ab is convex iff `steps` evenly spaced interior points lie in the
// closed solid. is_inside is strict on the boundary, so points on the surface
// (within 1e-9 of the diagonal) count as contained.
inline bool segment_inside(const convfield::SolidMesh& mesh, const Vec3& a, const Vec3& b,
                           int steps = 512) {
  const double on_surface = 1e-9 * mesh.diagonal();
  for (int i = 1; i <= steps; ++i) {
    const double t = static_cast<double>(i) / (steps + 1);
    const Vec3 p = a + t * (b - a);
    if (convfield::is_inside(mesh, p)) continue;
    if (convfield::closest_point(mesh, p).distance > on_surface) return false;
  }
  return true;
}

struct Box {
  Vec3 lo, hi;
  double distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
    return d.norm();
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  // Unsigned distance to the box's boundary surface.
  double surface_distance(const Vec3& p) const {
    if (!contains(p)) return distance(p);
    return std::min((p - lo).minCoeff(), (hi - p).minCoeff());
  }
};

// Raw-coordinate L-shape arms, matching shapes::l_shape().
inline Box l_arm_x() { return {Vec3(0, 0, 0), Vec3(2, 1, 1)}; }
inline Box l_arm_y() { return {Vec3(0, 0, 0), Vec3(1, 2, 1)}; }

inline double l_solid_distance(const Vec3& p) {
  return std::min(l_arm_x().distance(p), l_arm_y().distance(p));
}

// Half-space description of hull(L): the bounding box cut by x + y <= 3.
struct Plane {
  Vec3 n;
  double d;
};
inline std::vector<Plane> l_hull_planes() {
  return {{Vec3(-1, 0, 0), 0.0}, {Vec3(1, 0, 0), 2.0},  {Vec3(0, -1, 0), 0.0},
          {Vec3(0, 1, 0), 2.0},  {Vec3(0, 0, -1), 0.0}, {Vec3(0, 0, 1), 1.0},
          {Vec3(1, 1, 0).normalized(), 3.0 / std::sqrt(2.0)}};
}
inline bool inside_planes(const std::vector<Plane>& planes, const Vec3& p) {
  for (const Plane& pl : planes) {
    if (pl.n.dot(p) > pl.d + 1e-12) return false;
  }
  return true;
}
// Distance from a point inside a convex polytope to its boundary.
inline double depth_in_planes(const std::vector<Plane>& planes, const Vec3& p) {
  double best = 1e300;
  for (const Plane& pl : planes) best = std::min(best, pl.d - pl.n.dot(p));
  return best;
}

struct WeightedPoint {
  Vec3 p;
  double w;
};

// Area-uniform lattice on a triangle soup: each triangle is cut into m^2
// congruent sub-triangles of edge ~ spacing, one point at each centroid.
inline std::vector<WeightedPoint> lattice(const std::vector<Vec3>& verts,
                                          const std::vector<convfield::Face>& faces,
                                          double spacing) {
  std::vector<WeightedPoint> out;
  for (const auto& f : faces) {
    const Vec3 a = verts[f[0]], b = verts[f[1]], c = verts[f[2]];
    const double longest = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
    const int m = std::max(1, static_cast<int>(std::ceil(longest / spacing)));
    const double area = 0.5 * (b - a).cross(c - a).norm() / (static_cast<double>(m) * m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; i + j < m; ++j) {
        // upright sub-triangle
        out.push_back({a + ((i + 1.0 / 3) / m) * (b - a) + ((j + 1.0 / 3) / m) * (c - a), area});
        if (i + j + 1 < m) {
          out.push_back({a + ((i + 2.0 / 3) / m) * (b - a) + ((j + 2.0 / 3) / m) * (c - a), area});
        }
      }
    }
  }
  return out;
}

// Surface triangles of an axis-aligned box.
inline std::pair<std::vector<Vec3>, std::vector<convfield::Face>> box_surface(const Box& b) {
  std::vector<Vec3> v;
  for (int c = 0; c < 8; ++c) {
    v.emplace_back(c & 1 ? b.hi.x() : b.lo.x(), c & 2 ? b.hi.y() : b.lo.y(), c & 4 ? b.hi.z() : b.lo.z());
  }
  // orientation is irrelevant for lattice sampling
  const std::vector<convfield::Face> f = {{0, 1, 3}, {0, 3, 2}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                                          {2, 3, 7}, {2, 7, 6}, {0, 2, 6}, {0, 6, 4}, {1, 3, 7}, {1, 7, 5}};
  return {v, f};
}

// Chamfer distance between a hull and a box surface: the mean of the two
// directed area-weighted mean distances, on lattices of the given spacing.
inline double hull_box_chamfer(const convfield::ConvexHull& h, const Box& box, double spacing = 0.05) {
  double to_box = 0, wa = 0, to_hull = 0, wb = 0;
  for (const auto& w : lattice(h.vertices, h.faces, spacing)) {
    to_box += box.surface_distance(w.p) * w.w;
    wa += w.w;
  }
  const auto [bv, bf] = box_surface(box);
  for (const auto& w : lattice(bv, bf, spacing)) {
    to_hull += std::abs(convfield::signed_distance(h, w.p)) * w.w;
    wb += w.w;
  }
  return 0.5 * (to_box / wa + to_hull / wb);
}

// Cell centers of a res^3 grid over the box satisfying `keep`.
inline std::vector<Vec3> grid_points(const Vec3& lo, const Vec3& hi, int res,
                                     const std::function<bool(const Vec3&)>& keep) {
  std::vector<Vec3> out;
  const Vec3 step = (hi - lo) / res;
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      for (int k = 0; k < res; ++k) {
        const Vec3 p = lo + Vec3((i + 0.5) * step.x(), (j + 0.5) * step.y(), (k + 0.5) * step.z());
        if (keep(p)) out.push_back(p);
      }
    }
  }
  return out;
}

struct LHullMetrics {
  double surface_h = 0;
  double volume_h = 0;
  double reconstruction = 0;  // L against its single hull
};

// Metrics of the raw L-shape against its convex hull on dense grids:
// res^3 cells for the volume term, lattices of spacing 2/res on both
// surfaces, every distance analytic.
inline LHullMetrics l_hull_metrics(int res = 128) {
  const auto planes = l_hull_planes();
  LHullMetrics out;
  for (const Vec3& p : grid_points(Vec3(0, 0, 0), Vec3(2, 2, 1), res,
                                   [&](const Vec3& q) { return inside_planes(planes, q); })) {
    out.volume_h = std::max(out.volume_h, l_solid_distance(p));
  }
  // L surface: grid faces of the two arms; hull surface: the L's outer
  // faces plus the cap over the notch
  const convfield::TriangleMesh l_mesh = [] {
    convfield::TriangleMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(2, 1, 0), Vec3(1, 1, 0), Vec3(1, 2, 0), Vec3(0, 2, 0)};
    for (int i = 0; i < 6; ++i) m.vertices.push_back(m.vertices[i] + Vec3(0, 0, 1));
    m.faces = {{0, 1, 2}, {0, 2, 3}, {0, 3, 4}, {0, 4, 5}};  // bottom (winding unused)
    for (auto f : std::vector<convfield::Face>(m.faces)) m.faces.push_back({f[0] + 6, f[1] + 6, f[2] + 6});
    for (std::uint32_t i = 0; i < 6; ++i) {
      const std::uint32_t j = (i + 1) % 6;
      m.faces.push_back({i, j, j + 6});
      m.faces.push_back({i, j + 6, i + 6});
    }
    return m;
  }();
  const double spacing = 2.0 / res;
  double l_to_hull = 0, l_area = 0;
  for (const WeightedPoint& w : lattice(l_mesh.vertices, l_mesh.faces, spacing)) {
    const double d = std::max(0.0, depth_in_planes(planes, w.p));
    out.surface_h = std::max(out.surface_h, d);
    l_to_hull += d * w.w;
    l_area += w.w;
  }
  convfield::TriangleMesh hull_mesh;
  hull_mesh.vertices = {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(2, 1, 0), Vec3(1, 2, 0), Vec3(0, 2, 0)};
  for (int i = 0; i < 5; ++i) hull_mesh.vertices.push_back(hull_mesh.vertices[i] + Vec3(0, 0, 1));
  hull_mesh.faces = {{0, 1, 2}, {0, 2, 3}, {0, 3, 4}, {5, 6, 7}, {5, 7, 8}, {5, 8, 9}};
  for (std::uint32_t i = 0; i < 5; ++i) {
    const std::uint32_t j = (i + 1) % 5;
    hull_mesh.faces.push_back({i, j, j + 5});
    hull_mesh.faces.push_back({i, j + 5, i + 5});
  }
  double hull_to_l = 0, hull_area = 0;
  for (const WeightedPoint& w : lattice(hull_mesh.vertices, hull_mesh.faces, spacing)) {
    const double d = l_solid_distance(w.p);
    out.surface_h = std::max(out.surface_h, d);
    hull_to_l += d * w.w;
    hull_area += w.w;
  }
  out.reconstruction = 0.5 * (l_to_hull / l_area + hull_to_l / hull_area);
  return out;
}

// Contrastive loss straight from its definition, without log-sum-exp.
inline double direct_contrastive(const std::vector<std::vector<double>>& f,
                                 const convfield::Triplet& t, double tau) {
  auto s = [&](std::size_t i, std::size_t j) {
    double d = 0;
    for (std::size_t c = 0; c < f[i].size(); ++c) d += f[i][c] * f[j][c];
    return std::exp(d / tau);
  };
  double nx = 0, np = 0;
  for (auto n : t.negatives) {
    nx += s(t.anchor, n);
    np += s(t.positive, n);
  }
  const double sxp = s(t.anchor, t.positive);
  return -0.5 * (std::log(sxp / (sxp + nx)) + std::log(sxp / (sxp + np)));
}

inline double direct_plain(const std::vector<std::vector<double>>& f,
                           const convfield::Triplet& t) {
  auto d = [&](std::size_t i, std::size_t j) {
    double r = 0;
    for (std::size_t c = 0; c < f[i].size(); ++c) r += f[i][c] * f[j][c];
    return r;
  };
  double neg = 0;
  for (auto n : t.negatives) neg += d(t.anchor, n);
  return 0.5 * (-d(t.anchor, t.positive) + neg / static_cast<double>(t.negatives.size()));
}

inline std::vector<std::vector<double>> rows_of(const convfield::FeatureSet& fs) {
  std::vector<std::vector<double>> r(fs.n);
  for (std::size_t i = 0; i < fs.n; ++i) r[i].assign(fs.row(i), fs.row(i) + fs.k);
  return r;
}

// Central-difference gradient of the batch-mean loss, projected onto each
// row's tangent plane, against the library's analytic gradient. Returns
// max |analytic - numeric| / max |numeric|.
inline double gradient_check(const convfield::FeatureSet& fs,
                             const std::vector<convfield::Triplet>& triplets,
                             convfield::LossMode mode, double h = 1e-5) {
  std::vector<std::uint32_t> batch(triplets.size());
  for (std::uint32_t i = 0; i < batch.size(); ++i) batch[i] = i;
  std::vector<double> grad;
  convfield::loss_gradient(fs, triplets, batch, mode, grad);

  auto rows = rows_of(fs);
  auto mean_loss = [&] {
    double s = 0;
    for (const auto& t : triplets) {
      s += mode == convfield::LossMode::Contrastive ? direct_contrastive(rows, t, fs.tau)
                                                   : direct_plain(rows, t);
    }
    return s / static_cast<double>(triplets.size());
  };
  std::vector<double> numeric(fs.n * fs.k);
  for (std::size_t i = 0; i < fs.n; ++i) {
    for (std::size_t c = 0; c < fs.k; ++c) {
      const double keep = rows[i][c];
      rows[i][c] = keep + h;
      const double up = mean_loss();
      rows[i][c] = keep - h;
      const double down = mean_loss();
      rows[i][c] = keep;
      numeric[i * fs.k + c] = (up - down) / (2 * h);
    }
    double along = 0;
    for (std::size_t c = 0; c < fs.k; ++c) along += numeric[i * fs.k + c] * rows[i][c];
    for (std::size_t c = 0; c < fs.k; ++c) numeric[i * fs.k + c] -= along * rows[i][c];
  }
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff = std::max(diff, std::abs(grad[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return diff / std::max(scale, 1e-300);
}

// Random small contrastive instance: n points, k dims, up to max_triplets
// triplets with 1..n-2 negatives each.
inline std::pair<convfield::FeatureSet, std::vector<convfield::Triplet>> random_instance(
    std::size_t n, std::size_t k, std::size_t n_triplets, double tau, convfield::Rng& rng) {
  convfield::FeatureSet fs = convfield::random_features(n, k, tau, rng);
  std::vector<convfield::Triplet> ts;
  for (std::size_t t = 0; t < n_triplets; ++t) {
    std::vector<std::uint32_t> ids(n);
    for (std::uint32_t i = 0; i < n; ++i) ids[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(ids[i], ids[convfield::uniform_index(rng, i + 1)]);
    }
    convfield::Triplet tr;
    tr.anchor = ids[0];
    tr.positive = ids[1];
    const std::size_t n_neg = 1 + convfield::uniform_index(rng, n - 2);
    tr.negatives.assign(ids.begin() + 2, ids.begin() + 2 + static_cast<long>(n_neg));
    ts.push_back(tr);
  }
  return {fs, ts};
}

inline convfield::SolidMesh solid(const convfield::TriangleMesh& m) {
  return convfield::SolidMesh::from_triangles(m);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("convfield_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace oracle
