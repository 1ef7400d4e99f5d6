#include "convfield/point_index.hpp"

#include "convfield/error.hpp"

#include <algorithm>
#include <numeric>

namespace convfield {

PointIndex::PointIndex(const std::vector<Vec3>& points) {
  index_.resize(points.size());
  std::iota(index_.begin(), index_.end(), 0u);
  scratch_ = points;
  if (!points.empty()) build(0, static_cast<std::uint32_t>(points.size()), 0);
  xs_.resize(points.size());
  ys_.resize(points.size());
  zs_.resize(points.size());
  for (std::size_t s = 0; s < index_.size(); ++s) {
    const Vec3& p = points[index_[s]];
    xs_[s] = p.x();
    ys_[s] = p.y();
    zs_[s] = p.z();
  }
  scratch_.clear();
  scratch_.shrink_to_fit();
}

std::int32_t PointIndex::build(std::uint32_t begin, std::uint32_t end, int depth) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize || depth > 60) return id;

  Aabb box;
  for (std::uint32_t i = begin; i < end; ++i) box.extend(scratch_[index_[i]]);
  int axis = 0;
  box.extent().maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = scratch_[a][axis], pb = scratch_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  nodes_[id].axis = static_cast<std::uint8_t>(axis);
  nodes_[id].split = scratch_[index_[mid]][axis];
  const std::int32_t left = build(begin, mid, depth + 1);
  const std::int32_t right = build(mid, end, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

simd::NearestHit PointIndex::nearest(const Vec3& q) const {
  if (index_.empty()) fail(ErrorKind::Internal, "nearest query on empty index");
  const double qa[3] = {q.x(), q.y(), q.z()};
  simd::NearestHit best{std::numeric_limits<double>::infinity(), 0};
  std::uint32_t best_slot = 0;
  struct Entry {
    std::int32_t node;
    double bound;  // squared distance to the splitting plane crossed to get here
  };
  Entry stack[128];
  int top = 0;
  stack[top++] = {0, 0.0};
  while (top > 0) {
    const Entry e = stack[--top];
    if (e.bound > best.dist2) continue;
    const Node& n = nodes_[e.node];
    if (n.left < 0) {
      const std::uint32_t count = n.end - n.begin;
      const simd::NearestHit h =
          simd::nearest_point(&xs_[n.begin], &ys_[n.begin], &zs_[n.begin], count, qa);
      if (h.dist2 < best.dist2) {
        best.dist2 = h.dist2;
        best_slot = n.begin + h.index;
      }
      continue;
    }
    const double diff = qa[n.axis] - n.split;
    const std::int32_t near_child = diff < 0.0 ? n.left : n.right;
    const std::int32_t far_child = diff < 0.0 ? n.right : n.left;
    stack[top++] = {far_child, std::max(e.bound, diff * diff)};
    stack[top++] = {near_child, e.bound};
  }
  best.index = index_[best_slot];
  return best;
}

double PointIndex::distance(const Vec3& q) const {
  return std::sqrt(nearest(q).dist2);
}

} // namespace convfield
