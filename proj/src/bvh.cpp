#include "convfield/bvh.hpp"

#include "convfield/simd/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace convfield {
namespace {

constexpr int kBins = 12;
constexpr double kInf = std::numeric_limits<double>::infinity();

double surface_area(const Aabb& b) {
  const Vec3 e = b.extent();
  if ((e.array() < 0.0).any()) {
    return 0.0;
  }
  return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.z() * e.x());
}

// Slab test; NaN from 0 * inf is ignored by fmin/fmax.
inline bool ray_box(const double bmin[3], const double bmax[3], const Vec3& origin,
                    const Vec3& inv_dir, double t_min, double t_max, double& t_entry) {
  double lo = t_min;
  double hi = t_max;
  for (int a = 0; a < 3; ++a) {
    const double t0 = (bmin[a] - origin[a]) * inv_dir[a];
    const double t1 = (bmax[a] - origin[a]) * inv_dir[a];
    lo = std::fmax(lo, std::fmin(t0, t1));
    hi = std::fmin(hi, std::fmax(t0, t1));
  }
  t_entry = lo;
  return lo <= hi;
}

inline double box_distance2(const double bmin[3], const double bmax[3], const Vec3& p) {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double d = std::max({bmin[a] - p[a], 0.0, p[a] - bmax[a]});
    d2 += d * d;
  }
  return d2;
}

} // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    return a;
  }
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    return a + (d1 / (d1 - d3)) * ab;
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    return a + (d2 / (d2 - d6)) * ac;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

Bvh::Bvh(const std::vector<Vec3>& vertices, const std::vector<Face>& faces) {
  const auto n = static_cast<std::uint32_t>(faces.size());
  std::vector<Vec3> centroids(n);
  std::vector<Aabb> boxes(n);
  for (std::uint32_t f = 0; f < n; ++f) {
    for (auto v : faces[f]) {
      boxes[f].extend(vertices[v]);
    }
    centroids[f] = (vertices[faces[f][0]] + vertices[faces[f][1]] + vertices[faces[f][2]]) / 3.0;
  }
  std::vector<std::uint32_t> ids(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    ids[i] = i;
  }
  nodes_.reserve(n == 0 ? 1 : 2 * n);
  if (n == 0) {
    nodes_.push_back(Node{{kInf, kInf, kInf}, {-kInf, -kInf, -kInf}, 0, 0});
    return;
  }
  build(ids, 0, n, centroids, boxes);

  face_ids_ = ids;
  slot_of_face_.assign(n, 0);
  for (int a = 0; a < 3; ++a) {
    v0_[a].resize(n);
    e1_[a].resize(n);
    e2_[a].resize(n);
  }
  for (std::uint32_t slot = 0; slot < n; ++slot) {
    const Face& f = faces[ids[slot]];
    slot_of_face_[ids[slot]] = slot;
    const Vec3& a = vertices[f[0]];
    const Vec3 e1 = vertices[f[1]] - a;
    const Vec3 e2 = vertices[f[2]] - a;
    for (int k = 0; k < 3; ++k) {
      v0_[k][slot] = a[k];
      e1_[k][slot] = e1[k];
      e2_[k][slot] = e2[k];
    }
  }
}

std::uint32_t Bvh::build(std::vector<std::uint32_t>& ids, std::uint32_t begin, std::uint32_t end,
                         const std::vector<Vec3>& centroids, const std::vector<Aabb>& boxes) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{});
  Aabb bounds;
  Aabb cbounds;
  for (std::uint32_t i = begin; i < end; ++i) {
    bounds.extend(boxes[ids[i]].min);
    bounds.extend(boxes[ids[i]].max);
    cbounds.extend(centroids[ids[i]]);
  }
  auto store_bounds = [&](Node& node) {
    for (int a = 0; a < 3; ++a) {
      node.bmin[a] = bounds.min[a];
      node.bmax[a] = bounds.max[a];
    }
  };
  const std::uint32_t count = end - begin;
  auto make_leaf = [&] {
    Node& node = nodes_[index];
    store_bounds(node);
    node.first = begin;
    node.count = count;
    return index;
  };
  if (count <= 2) {
    return make_leaf();
  }

  // Binned SAH over the widest centroid axis.
  const Vec3 cext = cbounds.extent();
  int axis = 0;
  if (cext.y() > cext[axis]) axis = 1;
  if (cext.z() > cext[axis]) axis = 2;
  if (cext[axis] <= 0.0) {
    if (count <= kMaxLeafSize) {
      return make_leaf();
    }
    const std::uint32_t mid = begin + count / 2;
    const std::uint32_t left = build(ids, begin, mid, centroids, boxes);
    (void)left;
    const std::uint32_t right = build(ids, mid, end, centroids, boxes);
    Node& node = nodes_[index];
    store_bounds(node);
    node.first = right;
    node.count = 0;
    return index;
  }
  std::array<Aabb, kBins> bin_box;
  std::array<std::uint32_t, kBins> bin_count{};
  const double scale = kBins / cext[axis];
  auto bin_of = [&](std::uint32_t id) {
    int b = static_cast<int>((centroids[id][axis] - cbounds.min[axis]) * scale);
    return std::clamp(b, 0, kBins - 1);
  };
  for (std::uint32_t i = begin; i < end; ++i) {
    const int b = bin_of(ids[i]);
    ++bin_count[b];
    bin_box[b].extend(boxes[ids[i]].min);
    bin_box[b].extend(boxes[ids[i]].max);
  }
  std::array<double, kBins - 1> cost{};
  {
    Aabb acc;
    std::uint32_t n = 0;
    for (int b = 0; b < kBins - 1; ++b) {
      if (bin_count[b] > 0) {
        acc.extend(bin_box[b].min);
        acc.extend(bin_box[b].max);
      }
      n += bin_count[b];
      cost[b] = n * surface_area(acc);
    }
    acc = Aabb{};
    n = 0;
    for (int b = kBins - 1; b > 0; --b) {
      if (bin_count[b] > 0) {
        acc.extend(bin_box[b].min);
        acc.extend(bin_box[b].max);
      }
      n += bin_count[b];
      cost[b - 1] += n * surface_area(acc);
    }
  }
  int best = 0;
  for (int b = 1; b < kBins - 1; ++b) {
    if (cost[b] < cost[best]) {
      best = b;
    }
  }
  const double leaf_cost = count * surface_area(bounds);
  if (count <= kMaxLeafSize && cost[best] >= leaf_cost) {
    return make_leaf();
  }
  auto mid_it = std::partition(ids.begin() + begin, ids.begin() + end,
                               [&](std::uint32_t id) { return bin_of(id) <= best; });
  auto mid = static_cast<std::uint32_t>(mid_it - ids.begin());
  if (mid == begin || mid == end) {
    mid = begin + count / 2;
    std::nth_element(ids.begin() + begin, ids.begin() + mid, ids.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return centroids[a][axis] < centroids[b][axis] ||
                              (centroids[a][axis] == centroids[b][axis] && a < b);
                     });
  }
  build(ids, begin, mid, centroids, boxes);
  const std::uint32_t right = build(ids, mid, end, centroids, boxes);
  Node& node = nodes_[index];
  store_bounds(node);
  node.first = right;
  node.count = 0;
  return index;
}

template <typename LeafFn>
void Bvh::traverse(const Vec3& origin, const Vec3& dir, double t_min, double& t_max,
                   LeafFn&& leaf) const {
  const Vec3 inv(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
  std::uint32_t stack[128];
  double stack_t[128];
  int top = 0;
  double entry = 0.0;
  if (!ray_box(nodes_[0].bmin, nodes_[0].bmax, origin, inv, t_min, t_max, entry)) {
    return;
  }
  stack_t[top] = entry;
  stack[top++] = 0;
  while (top > 0) {
    --top;
    if (stack_t[top] > t_max) {
      continue;
    }
    const Node& node = nodes_[stack[top]];
    if (node.count > 0) {
      if (!leaf(node.first, node.first + node.count)) {
        return;
      }
      continue;
    }
    const std::uint32_t left = static_cast<std::uint32_t>(&node - nodes_.data()) + 1;
    const std::uint32_t right = node.first;
    double tl = 0.0;
    double tr = 0.0;
    const bool hl = ray_box(nodes_[left].bmin, nodes_[left].bmax, origin, inv, t_min, t_max, tl);
    const bool hr = ray_box(nodes_[right].bmin, nodes_[right].bmax, origin, inv, t_min, t_max, tr);
    auto push = [&](std::uint32_t child, double t) {
      stack_t[top] = t;
      stack[top++] = child;
    };
    if (hl && hr) {
      if (tl <= tr) {
        push(right, tr);
        push(left, tl);
      } else {
        push(left, tl);
        push(right, tr);
      }
    } else if (hl) {
      push(left, tl);
    } else if (hr) {
      push(right, tr);
    }
  }
}

namespace {

simd::TriangleSoA soa_view(const std::vector<double> (&v0)[3], const std::vector<double> (&e1)[3],
                           const std::vector<double> (&e2)[3]) {
  return simd::TriangleSoA{{v0[0].data(), v0[1].data(), v0[2].data()},
                           {e1[0].data(), e1[1].data(), e1[2].data()},
                           {e2[0].data(), e2[1].data(), e2[2].data()}};
}

simd::RayData ray_data(const Vec3& origin, const Vec3& dir) {
  return simd::RayData{{origin.x(), origin.y(), origin.z()}, {dir.x(), dir.y(), dir.z()}};
}

} // namespace

std::optional<Bvh::Hit> Bvh::nearest_hit(const Vec3& origin, const Vec3& dir, double t_min,
                                         double t_max) const {
  if (face_ids_.empty()) {
    return std::nullopt;
  }
  const auto tris = soa_view(v0_, e1_, e2_);
  const auto ray = ray_data(origin, dir);
  std::optional<Hit> best;
  double limit = t_max;
  double buffer[kMaxLeafSize];
  traverse(origin, dir, t_min, limit, [&](std::uint32_t begin, std::uint32_t end) {
    simd::ray_triangles(tris, begin, end, ray, buffer);
    for (std::uint32_t s = begin; s < end; ++s) {
      const double t = buffer[s - begin];
      if (t > t_min && t <= t_max) {
        const std::uint32_t f = face_ids_[s];
        if (!best || t < best->t || (t == best->t && f < best->face_id)) {
          best = Hit{t, f};
          limit = t;
        }
      }
    }
    return true;
  });
  return best;
}

std::optional<Bvh::Hit> Bvh::nearest_hit_brute_force(const Vec3& origin, const Vec3& dir,
                                                     double t_min, double t_max) const {
  const auto tris = soa_view(v0_, e1_, e2_);
  const auto ray = ray_data(origin, dir);
  const auto& kernel = simd::scalar_kernels();
  std::optional<Hit> best;
  for (std::uint32_t f = 0; f < slot_of_face_.size(); ++f) {
    const std::uint32_t s = slot_of_face_[f];
    double t = kInf;
    kernel.ray_triangles(tris, s, s + 1, ray, &t);
    if (t > t_min && t <= t_max && (!best || t < best->t)) {
      best = Hit{t, f};
    }
  }
  return best;
}

bool Bvh::any_hit(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const {
  if (face_ids_.empty()) {
    return false;
  }
  const auto tris = soa_view(v0_, e1_, e2_);
  const auto ray = ray_data(origin, dir);
  bool hit = false;
  double limit = t_max;
  double buffer[kMaxLeafSize];
  traverse(origin, dir, t_min, limit, [&](std::uint32_t begin, std::uint32_t end) {
    simd::ray_triangles(tris, begin, end, ray, buffer);
    for (std::uint32_t s = begin; s < end; ++s) {
      const double t = buffer[s - begin];
      if (t > t_min && t < t_max) {
        hit = true;
        return false;
      }
    }
    return true;
  });
  return hit;
}

void Bvh::all_hits(const Vec3& origin, const Vec3& dir, double t_min,
                   std::vector<Hit>& out) const {
  out.clear();
  if (face_ids_.empty()) {
    return;
  }
  const auto tris = soa_view(v0_, e1_, e2_);
  const auto ray = ray_data(origin, dir);
  double limit = kInf;
  double buffer[kMaxLeafSize];
  traverse(origin, dir, t_min, limit, [&](std::uint32_t begin, std::uint32_t end) {
    simd::ray_triangles(tris, begin, end, ray, buffer);
    for (std::uint32_t s = begin; s < end; ++s) {
      if (buffer[s - begin] > t_min && buffer[s - begin] < kInf) {
        out.push_back(Hit{buffer[s - begin], face_ids_[s]});
      }
    }
    return true;
  });
}

ClosestPoint Bvh::closest_point(const Vec3& p) const {
  ClosestPoint best{kInf, 0, p};
  if (face_ids_.empty()) {
    return best;
  }
  double best2 = kInf;
  std::uint32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const std::uint32_t ni = stack[--top];
    const Node& node = nodes_[ni];
    if (box_distance2(node.bmin, node.bmax, p) > best2) {
      continue;
    }
    if (node.count > 0) {
      for (std::uint32_t s = node.first; s < node.first + node.count; ++s) {
        const Vec3 a(v0_[0][s], v0_[1][s], v0_[2][s]);
        const Vec3 b = a + Vec3(e1_[0][s], e1_[1][s], e1_[2][s]);
        const Vec3 c = a + Vec3(e2_[0][s], e2_[1][s], e2_[2][s]);
        const Vec3 q = closest_point_on_triangle(p, a, b, c);
        const double d2 = (q - p).squaredNorm();
        if (d2 < best2 || (d2 == best2 && face_ids_[s] < best.face_id)) {
          best2 = d2;
          best.face_id = face_ids_[s];
          best.position = q;
        }
      }
      continue;
    }
    const std::uint32_t left = ni + 1;
    const std::uint32_t right = node.first;
    const double dl = box_distance2(nodes_[left].bmin, nodes_[left].bmax, p);
    const double dr = box_distance2(nodes_[right].bmin, nodes_[right].bmax, p);
    if (dl <= dr) {
      stack[top++] = right;
      stack[top++] = left;
    } else {
      stack[top++] = left;
      stack[top++] = right;
    }
  }
  best.distance = std::sqrt(best2);
  return best;
}

} // namespace convfield
