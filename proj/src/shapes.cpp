#include "convfield/shapes.hpp"

#include "convfield/error.hpp"
#include "convfield/remesh.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace convfield::shapes {

TriangleMesh box(const Vec3& lo, const Vec3& hi) {
  TriangleMesh m;
  for (int c = 0; c < 8; ++c) {
    m.vertices.emplace_back((c & 1) ? hi.x() : lo.x(), (c & 2) ? hi.y() : lo.y(),
                            (c & 4) ? hi.z() : lo.z());
  }
  // outward-oriented, two triangles per side
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

TriangleMesh voxel_solid(const std::vector<std::array<int, 3>>& cells, double cell_size,
                         int subdivisions) {
  if (cells.empty() || subdivisions < 1 || !(cell_size > 0.0)) {
    fail(ErrorKind::InvalidArgument, "voxel_solid needs cells, subdivisions >= 1, size > 0");
  }
  const std::set<std::array<int, 3>> occupied(cells.begin(), cells.end());
  const int s = subdivisions;
  const double h = cell_size / s;
  TriangleMesh m;
  std::map<std::array<int, 3>, std::uint32_t> ids;
  auto vertex = [&](std::array<int, 3> g) {
    auto [it, inserted] = ids.try_emplace(g, static_cast<std::uint32_t>(m.vertices.size()));
    if (inserted) m.vertices.emplace_back(g[0] * h, g[1] * h, g[2] * h);
    return it->second;
  };
  for (const auto& c : occupied) {
    for (int axis = 0; axis < 3; ++axis) {
      for (int sign : {-1, 1}) {
        auto nb = c;
        nb[axis] += sign;
        if (occupied.count(nb)) continue;
        const int u = (axis + 1) % 3;
        const int v = (axis + 2) % 3;
        for (int a = 0; a < s; ++a) {
          for (int b = 0; b < s; ++b) {
            std::array<std::uint32_t, 4> q;
            const int du[4] = {0, 1, 1, 0};
            const int dv[4] = {0, 0, 1, 1};
            for (int corner = 0; corner < 4; ++corner) {
              std::array<int, 3> g;
              g[axis] = (c[axis] + (sign > 0 ? 1 : 0)) * s;
              g[u] = c[u] * s + a + du[corner];
              g[v] = c[v] * s + b + dv[corner];
              q[corner] = vertex(g);
            }
            // (u, v, axis) is right-handed, so this winding faces +axis
            if (sign > 0) {
              m.faces.push_back({q[0], q[1], q[2]});
              m.faces.push_back({q[0], q[2], q[3]});
            } else {
              m.faces.push_back({q[0], q[2], q[1]});
              m.faces.push_back({q[0], q[3], q[2]});
            }
          }
        }
      }
    }
  }
  return m;
}

TriangleMesh gridded_cube(int subdivisions) {
  TriangleMesh m = voxel_solid({{0, 0, 0}}, 2.0, subdivisions);
  for (Vec3& v : m.vertices) v -= Vec3::Ones();
  return m;
}

TriangleMesh l_shape(int subdivisions) {
  return voxel_solid({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, 1.0, subdivisions);
}

TriangleMesh u_shape(int subdivisions) {
  return voxel_solid({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}, {2, 1, 0}}, 1.0, subdivisions);
}

TriangleMesh t_shape(int subdivisions) {
  return voxel_solid({{0, 1, 0}, {1, 1, 0}, {2, 1, 0}, {1, 0, 0}}, 1.0, subdivisions);
}

TriangleMesh torus(double major, double minor, int nu, int nv) {
  if (nu < 3 || nv < 3) fail(ErrorKind::InvalidArgument, "torus needs nu, nv >= 3");
  TriangleMesh m;
  const double two_pi = 2.0 * std::numbers::pi;
  for (int i = 0; i < nu; ++i) {
    const double u = two_pi * i / nu;
    for (int j = 0; j < nv; ++j) {
      const double v = two_pi * j / nv;
      const double r = major + minor * std::cos(v);
      m.vertices.emplace_back(r * std::cos(u), r * std::sin(u), minor * std::sin(v));
    }
  }
  auto id = [&](int i, int j) { return static_cast<std::uint32_t>((i % nu) * nv + (j % nv)); };
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return m;
}

TriangleMesh star_prism(int points, double r_outer, double r_inner, double height) {
  if (points < 3) fail(ErrorKind::InvalidArgument, "star needs >= 3 points");
  TriangleMesh m;
  const int ring = 2 * points;
  for (double z : {-0.5 * height, 0.5 * height}) {
    for (int i = 0; i < ring; ++i) {
      const double a = std::numbers::pi * i / points;
      const double r = (i % 2 == 0) ? r_outer : r_inner;
      m.vertices.emplace_back(r * std::cos(a), r * std::sin(a), z);
    }
  }
  const auto bottom_c = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, -0.5 * height);
  const auto top_c = bottom_c + 1;
  m.vertices.emplace_back(0.0, 0.0, 0.5 * height);
  for (int i = 0; i < ring; ++i) {
    const auto a = static_cast<std::uint32_t>(i);
    const auto b = static_cast<std::uint32_t>((i + 1) % ring);
    const auto ta = a + ring, tb = b + ring;
    m.faces.push_back({a, b, tb});
    m.faces.push_back({a, tb, ta});
    m.faces.push_back({bottom_c, b, a});
    m.faces.push_back({top_c, ta, tb});
  }
  return m;
}

TriangleMesh icosphere(int level) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& v : m.vertices) v.normalize();
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      auto key = std::minmax(a, b);
      auto [it, inserted] = mid.try_emplace({key.first, key.second},
                                            static_cast<std::uint32_t>(m.vertices.size()));
      if (inserted) m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      return it->second;
    };
    std::vector<Face> next;
    for (const Face& f : m.faces) {
      const std::uint32_t ab = midpoint(f[0], f[1]);
      const std::uint32_t bc = midpoint(f[1], f[2]);
      const std::uint32_t ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  return m;
}

namespace {

double ellipsoid(const Vec3& p, const Vec3& c, const Vec3& r) {
  return ((p - c).cwiseQuotient(r).norm() - 1.0) * r.minCoeff();
}

double smooth_min(double a, double b, double k) {
  const double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
  return b + (a - b) * h - k * h * (1.0 - h);
}

} // namespace

TriangleMesh blob(int resolution) {
  auto f = [](const Vec3& p) {
    double d = ellipsoid(p, {-0.1, 0.0, -0.2}, {0.75, 0.5, 0.45});
    d = smooth_min(d, ellipsoid(p, {0.55, 0.0, 0.3}, {0.3, 0.27, 0.27}), 0.08);
    d = smooth_min(d, ellipsoid(p, {0.6, 0.13, 0.75}, {0.07, 0.06, 0.28}), 0.04);
    d = smooth_min(d, ellipsoid(p, {0.6, -0.13, 0.75}, {0.07, 0.06, 0.28}), 0.04);
    d = smooth_min(d, ellipsoid(p, {-0.85, 0.0, -0.05}, {0.12, 0.12, 0.12}), 0.05);
    return d;
  };
  Aabb box;
  box.extend(Vec3(-1.2, -1.2, -1.2));
  box.extend(Vec3(1.2, 1.2, 1.2));
  return polygonize(f, box, resolution);
}

TriangleMesh flat_sheet() {
  TriangleMesh m;
  m.vertices = {{-1, -1, 0}, {1, -1, 0}, {1, 1, 0}, {-1, 1, 0}};
  // the two sides use different diagonals so every edge has exactly two faces
  m.faces = {{0, 1, 2}, {0, 2, 3}, {1, 0, 3}, {1, 3, 2}};
  return m;
}

TriangleMesh two_boxes() {
  TriangleMesh a = box({-1, -0.5, -0.5}, {-0.2, 0.5, 0.5});
  const TriangleMesh b = box({0.2, -0.5, -0.5}, {1, 0.5, 0.5});
  const auto offset = static_cast<std::uint32_t>(a.vertices.size());
  a.vertices.insert(a.vertices.end(), b.vertices.begin(), b.vertices.end());
  for (Face f : b.faces) {
    a.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  }
  return a;
}

std::vector<std::string> names() {
  return {"cube", "grid_cube", "l_shape", "u_shape", "t_shape", "torus",
          "star", "sphere",    "blob",    "sheet",   "two_boxes"};
}

TriangleMesh by_name(const std::string& name) {
  if (name == "cube") return box(-Vec3::Ones(), Vec3::Ones());
  if (name == "grid_cube") return gridded_cube(8);
  if (name == "l_shape") return l_shape();
  if (name == "u_shape") return u_shape();
  if (name == "t_shape") return t_shape();
  if (name == "torus") return torus(0.7, 0.3, 32, 16);
  if (name == "star") return star_prism(5, 1.0, 0.45, 0.5);
  if (name == "sphere") return icosphere(3);
  if (name == "blob") return blob();
  if (name == "sheet") return flat_sheet();
  if (name == "two_boxes") return two_boxes();
  fail(ErrorKind::InvalidArgument, "unknown shape '" + name + "'");
}

} // namespace convfield::shapes
