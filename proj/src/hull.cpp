#include "convfield/hull.hpp"

#include "convfield/bvh.hpp"
#include "convfield/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <deque>
#include <map>
#include <unordered_map>

namespace convfield {

namespace {

struct QFace {
  std::uint32_t v[3];
  Vec3 normal;
  double offset;
  std::vector<std::uint32_t> outside;
  bool alive = true;
};

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

void finalize(ConvexHull& h) {
  const std::size_t nf = h.faces.size();
  h.normals.resize(nf);
  h.offsets.resize(nf);
  h.cumulative_areas.resize(nf);
  h.cumulative_volumes.resize(nf);
  h.bounds = Aabb();
  h.center = Vec3::Zero();
  for (const Vec3& v : h.vertices) {
    h.bounds.extend(v);
    h.center += v;
  }
  h.center /= static_cast<double>(h.vertices.size());
  double area = 0.0, volume = 0.0;
  for (std::size_t i = 0; i < nf; ++i) {
    const Vec3& a = h.vertices[h.faces[i][0]];
    const Vec3& b = h.vertices[h.faces[i][1]];
    const Vec3& c = h.vertices[h.faces[i][2]];
    const Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    h.normals[i] = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    h.offsets[i] = h.normals[i].dot(a);
    area += 0.5 * len;
    volume += (a - h.center).dot((b - h.center).cross(c - h.center)) / 6.0;
    h.cumulative_areas[i] = area;
    h.cumulative_volumes[i] = volume;
  }
  h.area = area;
  h.volume = volume;
}

} // namespace

ConvexHull convex_hull(const std::vector<Vec3>& points) {
  if (points.size() < 4) fail(ErrorKind::DegenerateHull, "fewer than 4 points");
  Aabb box;
  for (const Vec3& p : points) box.extend(p);
  const double diag = box.diagonal();
  const double eps = 1e-11 * std::max(diag, 1e-300);
  if (!(diag > 0.0)) fail(ErrorKind::DegenerateHull, "all points coincide");

  // initial simplex: extreme pair, farthest from their line, farthest from
  // their plane
  const auto n = static_cast<std::uint32_t>(points.size());
  std::uint32_t ext[6] = {0, 0, 0, 0, 0, 0};
  for (std::uint32_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      if (points[i][a] < points[ext[2 * a]][a]) ext[2 * a] = i;
      if (points[i][a] > points[ext[2 * a + 1]][a]) ext[2 * a + 1] = i;
    }
  }
  std::uint32_t i0 = 0, i1 = 0;
  double best = -1.0;
  for (int a = 0; a < 6; ++a) {
    for (int b = a + 1; b < 6; ++b) {
      const double d = (points[ext[a]] - points[ext[b]]).squaredNorm();
      if (d > best) {
        best = d;
        i0 = ext[a];
        i1 = ext[b];
      }
    }
  }
  const Vec3 axis = (points[i1] - points[i0]).normalized();
  std::uint32_t i2 = 0;
  best = -1.0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const Vec3 d = points[i] - points[i0];
    const double dist = (d - d.dot(axis) * axis).squaredNorm();
    if (dist > best) {
      best = dist;
      i2 = i;
    }
  }
  if (std::sqrt(best) <= eps * 100.0) fail(ErrorKind::DegenerateHull, "collinear points");
  const Vec3 pn = (points[i1] - points[i0]).cross(points[i2] - points[i0]).normalized();
  std::uint32_t i3 = 0;
  best = -1.0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const double dist = std::abs(pn.dot(points[i] - points[i0]));
    if (dist > best) {
      best = dist;
      i3 = i;
    }
  }
  if (best <= eps * 100.0) fail(ErrorKind::DegenerateHull, "coplanar points");

  std::vector<QFace> faces;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_face;
  auto add_face = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    QFace f;
    f.v[0] = a;
    f.v[1] = b;
    f.v[2] = c;
    f.normal = (points[b] - points[a]).cross(points[c] - points[a]).normalized();
    f.offset = f.normal.dot(points[a]);
    const auto id = static_cast<std::uint32_t>(faces.size());
    faces.push_back(std::move(f));
    edge_face[edge_key(a, b)] = id;
    edge_face[edge_key(b, c)] = id;
    edge_face[edge_key(c, a)] = id;
    return id;
  };
  if (pn.dot(points[i3] - points[i0]) > 0.0) std::swap(i1, i2);
  add_face(i0, i1, i2);
  add_face(i0, i3, i1);
  add_face(i1, i3, i2);
  add_face(i2, i3, i0);

  auto dist = [&](const QFace& f, std::uint32_t p) { return f.normal.dot(points[p]) - f.offset; };
  auto assign = [&](std::uint32_t p, const std::vector<std::uint32_t>& candidates) {
    double far = eps;
    std::int64_t target = -1;
    for (std::uint32_t fi : candidates) {
      const double d = dist(faces[fi], p);
      if (d > far) {
        far = d;
        target = fi;
      }
    }
    if (target >= 0) faces[target].outside.push_back(p);
    return target >= 0;
  };
  std::deque<std::uint32_t> work;
  {
    const std::vector<std::uint32_t> initial{0, 1, 2, 3};
    for (std::uint32_t p = 0; p < n; ++p) {
      if (p != i0 && p != i1 && p != i2 && p != i3) assign(p, initial);
    }
    for (std::uint32_t fi : initial) work.push_back(fi);
  }

  std::vector<char> visible;
  for (int pass = 0;; ++pass) {
    while (!work.empty()) {
      const std::uint32_t fi = work.front();
      work.pop_front();
      if (!faces[fi].alive || faces[fi].outside.empty()) continue;
      std::uint32_t eye = faces[fi].outside[0];
      double far = dist(faces[fi], eye);
      for (std::uint32_t p : faces[fi].outside) {
        const double d = dist(faces[fi], p);
        if (d > far) {
          far = d;
          eye = p;
        }
      }
      // visible region by flood fill from fi
      visible.assign(faces.size(), 0);
      std::vector<std::uint32_t> vis{fi};
      visible[fi] = 1;
      for (std::size_t q = 0; q < vis.size(); ++q) {
        const QFace& f = faces[vis[q]];
        for (int e = 0; e < 3; ++e) {
          const std::uint32_t g = edge_face.at(edge_key(f.v[(e + 1) % 3], f.v[e]));
          if (!visible[g] && dist(faces[g], eye) > eps) {
            visible[g] = 1;
            vis.push_back(g);
          }
        }
      }
      std::vector<std::pair<std::uint32_t, std::uint32_t>> horizon;
      std::vector<std::uint32_t> orphans;
      for (std::uint32_t v : vis) {
        QFace& f = faces[v];
        for (int e = 0; e < 3; ++e) {
          const std::uint32_t a = f.v[e], b = f.v[(e + 1) % 3];
          const std::uint32_t g = edge_face.at(edge_key(b, a));
          if (!visible[g]) horizon.emplace_back(a, b);
        }
        for (std::uint32_t p : f.outside) {
          if (p != eye) orphans.push_back(p);
        }
        f.outside.clear();
        f.outside.shrink_to_fit();
        f.alive = false;
      }
      for (std::uint32_t v : vis) {
        const QFace& f = faces[v];
        for (int e = 0; e < 3; ++e) {
          auto it = edge_face.find(edge_key(f.v[e], f.v[(e + 1) % 3]));
          if (it != edge_face.end() && it->second == v) edge_face.erase(it);
        }
      }
      std::vector<std::uint32_t> created;
      for (const auto& [a, b] : horizon) created.push_back(add_face(a, b, eye));
      std::sort(orphans.begin(), orphans.end());
      for (std::uint32_t p : orphans) assign(p, created);
      for (std::uint32_t c : created) work.push_back(c);
    }
    // Points dropped during reassignment can still lie above an older face.
    bool clean = true;
    std::vector<std::uint32_t> alive;
    for (std::uint32_t fi = 0; fi < faces.size(); ++fi) {
      if (faces[fi].alive) alive.push_back(fi);
    }
    for (std::uint32_t p = 0; p < n; ++p) {
      if (assign(p, alive)) clean = false;
    }
    if (clean || pass > 8) break;
    for (std::uint32_t fi : alive) work.push_back(fi);
  }

  ConvexHull hull;
  std::map<std::uint32_t, std::uint32_t> remap;
  for (const QFace& f : faces) {
    if (!f.alive) continue;
    for (std::uint32_t v : f.v) remap.emplace(v, 0);
  }
  for (auto& [orig, id] : remap) {
    id = static_cast<std::uint32_t>(hull.vertices.size());
    hull.vertices.push_back(points[orig]);
  }
  for (const QFace& f : faces) {
    if (f.alive) hull.faces.push_back({remap[f.v[0]], remap[f.v[1]], remap[f.v[2]]});
  }
  finalize(hull);
  return hull;
}

ConvexHull convex_hull_inflated(const std::vector<Vec3>& points) {
  if (points.empty()) fail(ErrorKind::DegenerateHull, "empty point set");
  if (points.size() >= 4) {
    try {
      return convex_hull(points);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateHull) throw;
    }
  }
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Vec3& p : points) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(points.size());
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  constexpr double kSlab = 1e-4;
  std::vector<Vec3> thick = points;
  for (int a = 0; a < 3; ++a) {
    // eigenvalues ascending; thicken every direction that is flat
    if (std::sqrt(std::max(eig.eigenvalues()[a], 0.0)) > kSlab) break;
    const Vec3 dir = eig.eigenvectors().col(a);
    const std::size_t m = thick.size();
    for (std::size_t i = 0; i < m; ++i) {
      thick.push_back(thick[i] - kSlab * dir);
      thick[i] += kSlab * dir;
    }
  }
  ConvexHull hull = convex_hull(thick);
  hull.inflated = true;
  return hull;
}

ConvexHull hull_from_mesh(std::vector<Vec3> vertices, std::vector<Face> faces) {
  ConvexHull hull;
  hull.vertices = std::move(vertices);
  hull.faces = std::move(faces);
  if (hull.vertices.size() < 4 || hull.faces.size() < 4) {
    fail(ErrorKind::DegenerateHull, "hull needs at least 4 vertices and 4 faces");
  }
  finalize(hull);
  // flip inward faces relative to the vertex centroid
  for (auto& f : hull.faces) {
    const Vec3 n = (hull.vertices[f[1]] - hull.vertices[f[0]]).cross(hull.vertices[f[2]] - hull.vertices[f[0]]);
    if (n.dot(hull.vertices[f[0]] - hull.center) < 0.0) std::swap(f[1], f[2]);
  }
  finalize(hull);
  return hull;
}

double plane_distance(const ConvexHull& hull, const Vec3& p) {
  double d = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hull.faces.size(); ++i) {
    d = std::max(d, hull.normals[i].dot(p) - hull.offsets[i]);
  }
  return d;
}

bool hull_contains(const ConvexHull& hull, const Vec3& p, double tol) {
  if (!hull.bounds.contains(p, tol)) return false;
  for (std::size_t i = 0; i < hull.faces.size(); ++i) {
    if (hull.normals[i].dot(p) - hull.offsets[i] > tol) return false;
  }
  return true;
}

double signed_distance(const ConvexHull& hull, const Vec3& p, Vec3* closest) {
  double pd = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t i = 0; i < hull.faces.size(); ++i) {
    const double d = hull.normals[i].dot(p) - hull.offsets[i];
    if (d > pd) {
      pd = d;
      arg = i;
    }
  }
  if (pd <= 0.0) {
    // inside a convex body the nearest boundary point lies on the nearest
    // facet plane, and its projection stays within that facet
    if (closest) *closest = p - pd * hull.normals[arg];
    return pd;
  }
  double best = std::numeric_limits<double>::infinity();
  for (const Face& f : hull.faces) {
    const Vec3 c = closest_point_on_triangle(p, hull.vertices[f[0]], hull.vertices[f[1]],
                                             hull.vertices[f[2]]);
    const double d = (c - p).squaredNorm();
    if (d < best) {
      best = d;
      if (closest) *closest = c;
    }
  }
  return std::sqrt(best);
}

Vec3 sample_hull_surface(const ConvexHull& hull, Rng& rng, std::uint32_t* face) {
  const double r = uniform01(rng) * hull.area;
  auto it = std::upper_bound(hull.cumulative_areas.begin(), hull.cumulative_areas.end(), r);
  const auto fi = static_cast<std::uint32_t>(
      std::min<std::ptrdiff_t>(it - hull.cumulative_areas.begin(),
                               static_cast<std::ptrdiff_t>(hull.faces.size()) - 1));
  const double s = std::sqrt(uniform01(rng));
  const double t = uniform01(rng);
  const Face& f = hull.faces[fi];
  if (face) *face = fi;
  return (1.0 - s) * hull.vertices[f[0]] + s * (1.0 - t) * hull.vertices[f[1]] +
         s * t * hull.vertices[f[2]];
}

Vec3 sample_hull_volume(const ConvexHull& hull, Rng& rng) {
  const double r = uniform01(rng) * hull.volume;
  auto it = std::upper_bound(hull.cumulative_volumes.begin(), hull.cumulative_volumes.end(), r);
  const auto fi = static_cast<std::size_t>(
      std::min<std::ptrdiff_t>(it - hull.cumulative_volumes.begin(),
                               static_cast<std::ptrdiff_t>(hull.faces.size()) - 1));
  const Face& f = hull.faces[fi];
  // uniform point in the tetrahedron (center, a, b, c) by folding the unit cube
  double s = uniform01(rng), t = uniform01(rng), u = uniform01(rng);
  if (s + t > 1.0) {
    s = 1.0 - s;
    t = 1.0 - t;
  }
  if (t + u > 1.0) {
    const double tmp = u;
    u = 1.0 - s - t;
    t = 1.0 - tmp;
  } else if (s + t + u > 1.0) {
    const double tmp = u;
    u = s + t + u - 1.0;
    s = 1.0 - t - tmp;
  }
  const double a = 1.0 - s - t - u;
  return a * hull.center + s * hull.vertices[f[0]] + t * hull.vertices[f[1]] +
         u * hull.vertices[f[2]];
}

bool is_convex_polytope(const std::vector<Vec3>& vertices, const std::vector<Face>& faces,
                        double tol) {
  if (vertices.size() < 4 || faces.size() < 4) return false;
  ConvexHull reoriented;
  try {
    reoriented = hull_from_mesh(vertices, faces);
  } catch (const Error&) {
    return false;
  }
  for (std::size_t i = 0; i < reoriented.faces.size(); ++i) {
    if (reoriented.normals[i].squaredNorm() == 0.0) return false;
    for (const Vec3& v : vertices) {
      if (reoriented.normals[i].dot(v) - reoriented.offsets[i] > tol) return false;
    }
  }
  // extremality: each vertex must stick out of the hull of all the others
  ConvexHull full;
  try {
    full = convex_hull(vertices);
  } catch (const Error&) {
    return false;
  }
  for (const Vec3& v : vertices) {
    bool found = false;
    for (const Vec3& h : full.vertices) {
      if ((h - v).norm() <= tol) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

} // namespace convfield
