#pragma once

#include "convfield/mesh.hpp"
#include "convfield/simd/kernels.hpp"

#include <vector>

namespace convfield {

// Static kd-tree for nearest-neighbour queries on a fixed point set. Leaves
// hold coordinates as separate x/y/z arrays and are scanned by the
// nearest_point kernel.
class PointIndex {
 public:
  PointIndex() = default;
  explicit PointIndex(const std::vector<Vec3>& points);

  // Nearest point (squared distance, original index). Requires size() > 0.
  // Equal distances resolve to the point met first in a fixed traversal, so
  // the answer does not depend on the kernel backend.
  simd::NearestHit nearest(const Vec3& q) const;
  double distance(const Vec3& q) const;
  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }

 private:
  static constexpr std::uint32_t kLeafSize = 32;
  struct Node {
    double split = 0.0;
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    std::uint8_t axis = 0;
  };
  std::int32_t build(std::uint32_t begin, std::uint32_t end, int depth);

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> index_;  // slot -> original index
  std::vector<double> xs_, ys_, zs_;
  std::vector<Vec3> scratch_;
};

} // namespace convfield
