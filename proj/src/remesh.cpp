#include "convfield/remesh.hpp"

#include "convfield/bvh.hpp"
#include "convfield/error.hpp"

#include <cmath>
#include <algorithm>
#include <unordered_map>

namespace convfield {

namespace {

// Kuhn split of the unit cube along its 0-7 diagonal. Corner bit 0 = x,
// bit 1 = y, bit 2 = z. Every cube uses the same diagonal so shared faces
// are triangulated identically on both sides.
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
                             {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};

struct Grid {
  int n = 0;  // nodes per axis
  Vec3 origin;
  double h = 0.0;
  std::vector<double> values;

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * n + j) * n + i;
  }
  Vec3 position(std::size_t id) const {
    const auto i = static_cast<int>(id % n);
    const auto j = static_cast<int>((id / n) % n);
    const auto k = static_cast<int>(id / (static_cast<std::size_t>(n) * n));
    return origin + h * Vec3(i, j, k);
  }
};

TriangleMesh march(Grid& grid) {
  // Nodes exactly on the level set would put vertices of several edges at the
  // same point; push them to the positive side.
  const double nudge = 1e-9 * grid.h;
  for (double& v : grid.values) {
    if (std::abs(v) < nudge) v = nudge;
  }
  TriangleMesh out;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
  auto vertex_on = [&](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    const std::uint64_t key = static_cast<std::uint64_t>(a) * grid.values.size() + b;
    auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(out.vertices.size()));
    if (inserted) {
      const double va = grid.values[a];
      const double vb = grid.values[b];
      double t = va / (va - vb);
      t = std::clamp(t, 1e-6, 1.0 - 1e-6);
      out.vertices.push_back(grid.position(a) + t * (grid.position(b) - grid.position(a)));
    }
    return it->second;
  };
  auto emit = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c, const Vec3& outward) {
    const Vec3 n = (out.vertices[b] - out.vertices[a]).cross(out.vertices[c] - out.vertices[a]);
    if (n.dot(outward) < 0.0) std::swap(b, c);
    out.faces.push_back({a, b, c});
  };

  const int cells = grid.n - 1;
  for (int k = 0; k < cells; ++k) {
    for (int j = 0; j < cells; ++j) {
      for (int i = 0; i < cells; ++i) {
        std::size_t corner[8];
        for (int c = 0; c < 8; ++c) {
          corner[c] = grid.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
        }
        for (const auto& tet : kTets) {
          std::size_t in[4], outv[4];
          int n_in = 0, n_out = 0;
          for (int v : tet) {
            const std::size_t id = corner[v];
            if (grid.values[id] < 0.0) in[n_in++] = id;
            else outv[n_out++] = id;
          }
          if (n_in == 0 || n_out == 0) continue;
          Vec3 cin = Vec3::Zero(), cout = Vec3::Zero();
          for (int q = 0; q < n_in; ++q) cin += grid.position(in[q]);
          for (int q = 0; q < n_out; ++q) cout += grid.position(outv[q]);
          const Vec3 outward = cout / n_out - cin / n_in;
          if (n_in == 1) {
            emit(vertex_on(in[0], outv[0]), vertex_on(in[0], outv[1]), vertex_on(in[0], outv[2]), outward);
          } else if (n_out == 1) {
            emit(vertex_on(outv[0], in[0]), vertex_on(outv[0], in[1]), vertex_on(outv[0], in[2]), outward);
          } else {
            const std::uint32_t ac = vertex_on(in[0], outv[0]);
            const std::uint32_t ad = vertex_on(in[0], outv[1]);
            const std::uint32_t bd = vertex_on(in[1], outv[1]);
            const std::uint32_t bc = vertex_on(in[1], outv[0]);
            emit(ac, ad, bd, outward);
            emit(ac, bd, bc, outward);
          }
        }
      }
    }
  }
  return out;
}

} // namespace

TriangleMesh polygonize(const std::function<double(const Vec3&)>& f, const Aabb& box,
                        int resolution) {
  if (resolution < 2) fail(ErrorKind::InvalidArgument, "polygonize resolution must be >= 2");
  Grid grid;
  grid.n = resolution + 1;
  grid.h = box.extent().maxCoeff() / resolution;
  grid.origin = box.center() - 0.5 * resolution * grid.h * Vec3::Ones();
  grid.values.resize(static_cast<std::size_t>(grid.n) * grid.n * grid.n);
  for (std::size_t id = 0; id < grid.values.size(); ++id) {
    grid.values[id] = f(grid.position(id));
  }
  return march(grid);
}

TriangleMesh voxel_repair(const TriangleMesh& soup, int resolution) {
  if (resolution < 4) fail(ErrorKind::InvalidArgument, "repair resolution must be >= 4");
  if (soup.faces.empty()) fail(ErrorKind::DegenerateGeometry, "nothing to repair");
  Aabb bounds;
  for (const Vec3& v : soup.vertices) bounds.extend(v);
  const double extent = bounds.extent().maxCoeff();
  if (!(extent > 0.0)) fail(ErrorKind::DegenerateGeometry, "zero-extent input");

  Grid grid;
  grid.n = resolution + 1;
  // two empty cells of padding on every side keep the boundary nodes outside
  grid.h = extent / (resolution - 4);
  grid.origin = bounds.center() - 0.5 * resolution * grid.h * Vec3::Ones();
  grid.values.resize(static_cast<std::size_t>(grid.n) * grid.n * grid.n);

  const Bvh bvh(soup.vertices, soup.faces);
  const auto total = static_cast<std::int64_t>(grid.values.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t id = 0; id < total; ++id) {
    grid.values[id] = bvh.closest_point(grid.position(static_cast<std::size_t>(id))).distance;
  }

  // Parity of crossings along each grid axis, majority of three: a hole
  // flips the parity of the lines through it in one direction only, where a
  // flood fill would leak through it. Lines are nudged off the grid so they
  // miss mesh edges and vertices.
  const std::size_t n = static_cast<std::size_t>(grid.n);
  std::vector<unsigned char> votes(grid.values.size(), 0);
  const double nudge[2] = {1.234567e-4 * grid.h, 2.718281e-4 * grid.h};
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    Vec3 dir = Vec3::Zero();
    dir[axis] = 1.0;
    const auto lines = static_cast<std::int64_t>(n * n);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t line = 0; line < lines; ++line) {
      const int a = static_cast<int>(line % grid.n), b = static_cast<int>(line / grid.n);
      Vec3 origin = grid.origin;
      origin[u] += a * grid.h + nudge[0];
      origin[v] += b * grid.h + nudge[1];
      origin[axis] -= grid.h;
      std::vector<Bvh::Hit> hits;
      bvh.all_hits(origin, dir, 0.0, hits);
      std::vector<double> ts;
      ts.reserve(hits.size());
      for (const Bvh::Hit& hit : hits) ts.push_back(hit.t);
      std::sort(ts.begin(), ts.end());
      std::size_t crossed = 0;
      for (int c = 0; c < grid.n; ++c) {
        const double t = (c + 1) * grid.h;
        while (crossed < ts.size() && ts[crossed] < t) ++crossed;
        int idx[3];
        idx[axis] = c;
        idx[u] = a;
        idx[v] = b;
        // each (line, node) pair belongs to exactly one thread
        if (crossed % 2 == 1) votes[grid.index(idx[0], idx[1], idx[2])] += 1;
      }
    }
  }
  const double band = 0.5 * grid.h;
  for (std::size_t id = 0; id < grid.values.size(); ++id) {
    const double d = grid.values[id];
    grid.values[id] = votes[id] >= 2 ? -d - band : d - band;
  }
  return march(grid);
}

} // namespace convfield
