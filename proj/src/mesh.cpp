#include "convfield/mesh.hpp"

#include "convfield/bvh.hpp"
#include "convfield/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <unordered_map>

namespace convfield {

double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) {
    u1 = uniform01(rng);
  }
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vec3 random_unit_vector(Rng& rng) {
  for (;;) {
    const Vec3 v(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    const double n = v.norm();
    if (n > 1e-12) {
      return v / n;
    }
  }
}

namespace {

constexpr double kDegenerateArea = 1e-12;

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) {
    std::swap(a, b);
  }
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

double signed_volume_of(const std::vector<Vec3>& v, const std::vector<Face>& faces,
                        const std::vector<std::uint32_t>& subset) {
  double vol = 0.0;
  for (auto f : subset) {
    vol += v[faces[f][0]].dot(v[faces[f][1]].cross(v[faces[f][2]]));
  }
  return vol / 6.0;
}

// Ray parity of p against a subset of faces, brute force; used only while
// orienting nested shells, before any accelerator exists.
bool inside_shell(const std::vector<Vec3>& v, const std::vector<Face>& faces,
                  const std::vector<std::uint32_t>& shell, const Vec3& p) {
  const Vec3 dir = Vec3(0.3141592653, 0.5772156649, 0.7548776662).normalized();
  int crossings = 0;
  for (auto f : shell) {
    const Vec3& a = v[faces[f][0]];
    const Vec3 e1 = v[faces[f][1]] - a;
    const Vec3 e2 = v[faces[f][2]] - a;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-18) continue;
    const Vec3 s = p - a;
    const double u = s.dot(pv) / det;
    if (u < 0.0 || u > 1.0) continue;
    const Vec3 q = s.cross(e1);
    const double w = dir.dot(q) / det;
    if (w < 0.0 || u + w > 1.0) continue;
    if (e2.dot(q) / det > 0.0) ++crossings;
  }
  return (crossings % 2) == 1;
}

} // namespace

Vec3 SolidMesh::face_centroid(std::uint32_t f) const {
  return (vertices_[faces_[f][0]] + vertices_[faces_[f][1]] + vertices_[faces_[f][2]]) / 3.0;
}

SolidMesh SolidMesh::from_triangles(TriangleMesh raw, std::vector<std::string>* warnings) {
  SolidMesh mesh;
  mesh.vertices_ = std::move(raw.vertices);
  const auto& v = mesh.vertices_;
  std::size_t dropped = 0;
  for (const Face& f : raw.faces) {
    for (auto idx : f) {
      if (idx >= v.size()) {
        fail(ErrorKind::Parse, "face references vertex " + std::to_string(idx) + " of " +
                                   std::to_string(v.size()));
      }
    }
    const double area = 0.5 * (v[f[1]] - v[f[0]]).cross(v[f[2]] - v[f[0]]).norm();
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2] || !(area >= kDegenerateArea)) {
      ++dropped;
      continue;
    }
    mesh.faces_.push_back(f);
  }
  if (dropped > 0 && warnings != nullptr) {
    warnings->push_back("dropped " + std::to_string(dropped) + " degenerate face(s)");
  }
  auto& faces = mesh.faces_;
  if (faces.empty()) {
    fail(ErrorKind::DegenerateGeometry, "mesh has no non-degenerate faces");
  }
  const auto nf = static_cast<std::uint32_t>(faces.size());

  // Edge incidence; a closed 2-manifold has exactly two faces per edge.
  std::unordered_map<std::uint64_t, std::array<std::uint32_t, 2>> edges;
  edges.reserve(faces.size() * 2);
  constexpr std::uint32_t kNone = 0xffffffffu;
  for (std::uint32_t f = 0; f < nf; ++f) {
    for (int i = 0; i < 3; ++i) {
      auto [it, inserted] =
          edges.try_emplace(edge_key(faces[f][i], faces[f][(i + 1) % 3]),
                            std::array<std::uint32_t, 2>{f, kNone});
      if (!inserted) {
        if (it->second[1] != kNone) {
          fail(ErrorKind::NonManifold, "edge shared by more than two faces");
        }
        it->second[1] = f;
      }
    }
  }
  for (const auto& [key, pair] : edges) {
    if (pair[1] == kNone) {
      fail(ErrorKind::NonManifold, "open boundary edge (" + std::to_string(key >> 32) + ", " +
                                       std::to_string(key & 0xffffffffu) + ")");
    }
  }

  mesh.face_neighbors_.assign(nf, {kNone, kNone, kNone});
  for (std::uint32_t f = 0; f < nf; ++f) {
    for (int i = 0; i < 3; ++i) {
      const auto& pair = edges.at(edge_key(faces[f][i], faces[f][(i + 1) % 3]));
      mesh.face_neighbors_[f][i] = pair[0] == f ? pair[1] : pair[0];
    }
  }

  // Consistent orientation per shell by flood fill: a shared edge must be
  // traversed in opposite directions by its two faces.
  auto has_directed = [&](std::uint32_t f, std::uint32_t a, std::uint32_t b) {
    for (int i = 0; i < 3; ++i) {
      if (faces[f][i] == a && faces[f][(i + 1) % 3] == b) return true;
    }
    return false;
  };
  std::vector<int> shell_of(nf, -1);
  std::vector<std::vector<std::uint32_t>> shells;
  for (std::uint32_t seed = 0; seed < nf; ++seed) {
    if (shell_of[seed] >= 0) continue;
    const int sid = static_cast<int>(shells.size());
    shells.emplace_back();
    std::vector<std::uint32_t> stack{seed};
    shell_of[seed] = sid;
    while (!stack.empty()) {
      const std::uint32_t f = stack.back();
      stack.pop_back();
      shells[sid].push_back(f);
      for (int i = 0; i < 3; ++i) {
        const std::uint32_t a = faces[f][i];
        const std::uint32_t b = faces[f][(i + 1) % 3];
        const std::uint32_t g = mesh.face_neighbors_[f][i];
        if (shell_of[g] < 0) {
          if (has_directed(g, a, b)) {
            std::swap(faces[g][1], faces[g][2]);
            // neighbor slots follow the edge order: (0,1),(1,2),(2,0) -> (0,2),(2,1),(1,0)
            auto& nb = mesh.face_neighbors_[g];
            nb = {nb[2], nb[1], nb[0]};
          }
          shell_of[g] = sid;
          stack.push_back(g);
        } else if (has_directed(g, a, b)) {
          fail(ErrorKind::NonManifold, "surface is not orientable");
        }
      }
    }
  }
  // Outward orientation: a shell nested inside an odd number of other shells
  // bounds a cavity and must face inward.
  for (std::size_t s = 0; s < shells.size(); ++s) {
    int depth = 0;
    if (shells.size() > 1 && shells.size() <= 64) {
      const Vec3& probe = v[faces[shells[s][0]][0]];
      for (std::size_t o = 0; o < shells.size(); ++o) {
        if (o != s && inside_shell(v, faces, shells[o], probe)) ++depth;
      }
    }
    const double vol = signed_volume_of(v, faces, shells[s]);
    const bool want_positive = (depth % 2) == 0;
    if ((vol < 0.0) == want_positive) {
      for (auto f : shells[s]) {
        std::swap(faces[f][1], faces[f][2]);
        auto& nb = mesh.face_neighbors_[f];
        nb = {nb[2], nb[1], nb[0]};
      }
    }
  }

  mesh.face_areas_.resize(nf);
  mesh.face_normals_.resize(nf);
  mesh.cumulative_areas_.resize(nf);
  double acc = 0.0;
  for (std::uint32_t f = 0; f < nf; ++f) {
    const Vec3 n = (v[faces[f][1]] - v[faces[f][0]]).cross(v[faces[f][2]] - v[faces[f][0]]);
    const double len = n.norm();
    mesh.face_areas_[f] = 0.5 * len;
    mesh.face_normals_[f] = n / len;
    acc += mesh.face_areas_[f];
    mesh.cumulative_areas_[f] = acc;
  }
  for (const Face& f : faces) {
    for (auto idx : f) mesh.bounds_.extend(v[idx]);
  }
  std::vector<std::uint32_t> all(nf);
  for (std::uint32_t f = 0; f < nf; ++f) all[f] = f;
  mesh.volume_ = signed_volume_of(v, faces, all);
  mesh.accel_ = std::make_shared<const Bvh>(mesh.vertices_, mesh.faces_);
  return mesh;
}

namespace {

TriangleMesh to_triangles(const SolidMesh& mesh) {
  return TriangleMesh{mesh.vertices(), mesh.faces()};
}

} // namespace

SolidMesh normalize(const SolidMesh& mesh, NormalizeTransform* transform) {
  const Aabb& box = mesh.bounds();
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0)) {
    fail(ErrorKind::DegenerateGeometry, "bounding box has zero extent");
  }
  NormalizeTransform xf{box.center(), 2.0 / longest};
  TriangleMesh raw = to_triangles(mesh);
  for (Vec3& p : raw.vertices) {
    p = (p - xf.center) * xf.scale;
  }
  if (transform != nullptr) {
    *transform = xf;
  }
  return SolidMesh::from_triangles(std::move(raw));
}

SolidMesh refine(const SolidMesh& mesh, double max_edge) {
  require(max_edge > 0.0, "refine: max_edge must be positive");
  std::vector<Vec3> verts = mesh.vertices();
  std::vector<Face> faces = mesh.faces();
  constexpr std::uint32_t kNone = 0xffffffffu;
  std::unordered_map<std::uint64_t, std::array<std::uint32_t, 2>> edges;
  auto add_face_edge = [&](std::uint32_t a, std::uint32_t b, std::uint32_t f) {
    auto [it, inserted] = edges.try_emplace(edge_key(a, b), std::array<std::uint32_t, 2>{f, kNone});
    if (!inserted) it->second[1] = f;
  };
  for (std::uint32_t f = 0; f < faces.size(); ++f) {
    for (int i = 0; i < 3; ++i) add_face_edge(faces[f][i], faces[f][(i + 1) % 3], f);
  }
  struct Item {
    double len;
    std::uint32_t a, b;
    bool operator<(const Item& o) const {
      if (len != o.len) return len < o.len;
      if (a != o.a) return a > o.a;
      return b > o.b;
    }
  };
  std::priority_queue<Item> queue;
  auto push_edge = [&](std::uint32_t a, std::uint32_t b) {
    const double len = (verts[a] - verts[b]).norm();
    if (len > max_edge) queue.push(Item{len, std::min(a, b), std::max(a, b)});
  };
  for (const auto& [key, pair] : edges) {
    push_edge(static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key & 0xffffffffu));
  }
  while (!queue.empty()) {
    const Item item = queue.top();
    queue.pop();
    auto it = edges.find(edge_key(item.a, item.b));
    if (it == edges.end()) continue;
    const auto pair = it->second;
    edges.erase(it);
    const auto m = static_cast<std::uint32_t>(verts.size());
    verts.push_back(0.5 * (verts[item.a] + verts[item.b]));
    for (auto f : pair) {
      int i = 0;
      while (!((faces[f][i] == item.a && faces[f][(i + 1) % 3] == item.b) ||
               (faces[f][i] == item.b && faces[f][(i + 1) % 3] == item.a))) {
        ++i;
      }
      const std::uint32_t x = faces[f][i];
      const std::uint32_t y = faces[f][(i + 1) % 3];
      const std::uint32_t z = faces[f][(i + 2) % 3];
      const auto g = static_cast<std::uint32_t>(faces.size());
      faces[f] = {x, m, z};
      faces.push_back({m, y, z});
      auto& yz = edges.at(edge_key(y, z));
      (yz[0] == f ? yz[0] : yz[1]) = g;
      add_face_edge(x, m, f);
      add_face_edge(m, y, g);
      add_face_edge(m, z, f);
      add_face_edge(m, z, g);
      push_edge(m, z);
    }
    push_edge(item.a, m);
    push_edge(m, item.b);
  }
  return SolidMesh::from_triangles(TriangleMesh{std::move(verts), std::move(faces)});
}

SurfaceSample sample_surface_point(const SolidMesh& mesh, Rng& rng) {
  const auto& cum = mesh.cumulative_areas();
  const double r = uniform01(rng) * mesh.total_area();
  auto it = std::upper_bound(cum.begin(), cum.end(), r);
  const auto f = static_cast<std::uint32_t>(
      std::min<std::ptrdiff_t>(it - cum.begin(), static_cast<std::ptrdiff_t>(cum.size()) - 1));
  const double s = std::sqrt(uniform01(rng));
  const double r2 = uniform01(rng);
  const Face& face = mesh.faces()[f];
  const auto& v = mesh.vertices();
  const Vec3 p = (1.0 - s) * v[face[0]] + (s * (1.0 - r2)) * v[face[1]] + (s * r2) * v[face[2]];
  return SurfaceSample{p, mesh.face_normals()[f], f};
}

std::vector<SurfaceSample> sample_surface(const SolidMesh& mesh, std::size_t count,
                                          std::uint64_t seed) {
  require(count >= 1, "sample_surface: count must be >= 1");
  Rng rng = make_rng(seed, 0x5a4d);
  std::vector<SurfaceSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(sample_surface_point(mesh, rng));
  }
  return out;
}

double default_ray_epsilon(const SolidMesh& mesh) {
  return 1e-5 * mesh.diagonal();
}

namespace {

RayHit make_hit(const SolidMesh& mesh, const Vec3& origin, const Vec3& dir, const Bvh::Hit& h) {
  return RayHit{h.t, h.face_id, origin + h.t * dir, mesh.face_normals()[h.face_id]};
}

} // namespace

std::optional<RayHit> cast_ray(const SolidMesh& mesh, const Vec3& origin, const Vec3& direction,
                               double t_min, double t_max) {
  auto hit = mesh.accel().nearest_hit(origin, direction, t_min, t_max);
  if (!hit) return std::nullopt;
  return make_hit(mesh, origin, direction, *hit);
}

std::optional<RayHit> cast_ray(const SolidMesh& mesh, const Vec3& origin, const Vec3& direction) {
  return cast_ray(mesh, origin, direction, default_ray_epsilon(mesh),
                  std::numeric_limits<double>::infinity());
}

std::optional<RayHit> cast_ray_brute_force(const SolidMesh& mesh, const Vec3& origin,
                                           const Vec3& direction, double t_min, double t_max) {
  auto hit = mesh.accel().nearest_hit_brute_force(origin, direction, t_min, t_max);
  if (!hit) return std::nullopt;
  return make_hit(mesh, origin, direction, *hit);
}

bool ray_blocked(const SolidMesh& mesh, const Vec3& origin, const Vec3& direction, double t_min,
                 double t_max) {
  return mesh.accel().any_hit(origin, direction, t_min, t_max);
}

std::size_t count_crossings(const SolidMesh& mesh, const Vec3& origin, const Vec3& direction,
                            double t_min) {
  thread_local std::vector<Bvh::Hit> hits;
  mesh.accel().all_hits(origin, direction, t_min, hits);
  std::sort(hits.begin(), hits.end(), [](const Bvh::Hit& a, const Bvh::Hit& b) {
    return a.t < b.t || (a.t == b.t && a.face_id < b.face_id);
  });
  // Hits at (numerically) the same t come from a shared edge or vertex. Same
  // facing means one transversal crossing; mixed facing is a graze.
  const double tol = 1e-10 * std::max(1.0, mesh.diagonal());
  std::size_t crossings = 0;
  std::size_t i = 0;
  while (i < hits.size()) {
    int net = 0;
    std::size_t j = i;
    while (j < hits.size() && hits[j].t - hits[i].t <= tol) {
      net += mesh.face_normals()[hits[j].face_id].dot(direction) > 0.0 ? 1 : -1;
      ++j;
    }
    if (net != 0) ++crossings;
    i = j;
  }
  return crossings;
}

bool is_inside(const SolidMesh& mesh, const Vec3& point) {
  static const Vec3 kDirs[3] = {
      Vec3(0.3141592653, 0.5772156649, 0.7548776662).normalized(),
      Vec3(-0.6180339887, 0.2718281828, 0.7385164807).normalized(),
      Vec3(0.4142135623, -0.8660254038, -0.2820947918).normalized(),
  };
  if (!mesh.bounds().contains(point)) {
    return false;
  }
  int votes = 0;
  for (int d = 0; d < 3; ++d) {
    if (count_crossings(mesh, point, kDirs[d], 0.0) % 2 == 1) ++votes;
    if (votes >= 2 || votes + (2 - d) < 2) break;
  }
  return votes >= 2;
}

ClosestPoint closest_point(const SolidMesh& mesh, const Vec3& point) {
  return mesh.accel().closest_point(point);
}

std::vector<Vec3> sample_volume(const SolidMesh& mesh, std::size_t count, std::uint64_t seed,
                                VolumeSampleStats* stats) {
  require(count >= 1, "sample_volume: count must be >= 1");
  constexpr std::size_t kCheckEvery = 100000;
  constexpr double kMinAcceptance = 1e-4;
  VolumeSampleStats local;
  const Aabb& box = mesh.bounds();
  const Vec3 ext = box.extent();
  std::vector<Vec3> out;
  out.reserve(count);
  if (!(ext.minCoeff() > 0.0)) {
    if (stats != nullptr) *stats = local;
    fail(ErrorKind::LowAcceptance, "solid has a zero-extent bounding box");
  }
  Rng rng = make_rng(seed, 0x701);
  while (out.size() < count) {
    const Vec3 p = box.min + Vec3(uniform01(rng), uniform01(rng), uniform01(rng)).cwiseProduct(ext);
    ++local.attempts;
    if (is_inside(mesh, p)) {
      out.push_back(p);
      ++local.accepted;
    }
    if (local.attempts % kCheckEvery == 0 && local.acceptance() < kMinAcceptance) {
      if (stats != nullptr) *stats = local;
      fail(ErrorKind::LowAcceptance,
           "volume sampling acceptance " + std::to_string(local.acceptance()) + " below 1e-4");
    }
  }
  if (stats != nullptr) *stats = local;
  return out;
}

} // namespace convfield
