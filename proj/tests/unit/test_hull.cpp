#include "convfield/error.hpp"
#include "convfield/hull.hpp"
#include "convfield/shapes.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace convfield;

namespace {

void expect_valid(const ConvexHull& h, const std::vector<Vec3>& input, double diag) {
  for (const Vec3& p : input) ASSERT_LE(plane_distance(h, p), 1e-9 * diag);
  EXPECT_TRUE(is_convex_polytope(h.vertices, h.faces, 1e-9 * diag));
  // Euler characteristic of a closed triangulated sphere
  EXPECT_EQ(static_cast<long>(h.vertices.size()) - static_cast<long>(h.faces.size()) / 2, 2);
}

} // namespace

TEST(Hull, CubeCornersWithInteriorPoints) {
  std::vector<Vec3> pts;
  for (int c = 0; c < 8; ++c) pts.emplace_back(c & 1 ? 1 : -1, c & 2 ? 1 : -1, c & 4 ? 1 : -1);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    pts.emplace_back(1.8 * uniform01(rng) - 0.9, 1.8 * uniform01(rng) - 0.9, 1.8 * uniform01(rng) - 0.9);
  }
  const ConvexHull h = convex_hull(pts);
  EXPECT_EQ(h.vertices.size(), 8u);
  EXPECT_NEAR(h.volume, 8.0, 1e-12);
  EXPECT_NEAR(h.area, 24.0, 1e-12);
  expect_valid(h, pts, std::sqrt(12.0));
}

TEST(Hull, RegularTetrahedronVolume) {
  const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, std::sqrt(3.0) / 2, 0),
                                 Vec3(0.5, std::sqrt(3.0) / 6, std::sqrt(2.0 / 3.0))};
  const ConvexHull h = convex_hull(pts);
  EXPECT_EQ(h.faces.size(), 4u);
  EXPECT_NEAR(h.volume, 1.0 / (6.0 * std::sqrt(2.0)), 1e-12);
  EXPECT_NEAR(h.volume, 0.11785, 1e-5);
}

TEST(Hull, SpherePointsAreAllExtreme) {
  Rng rng(2);
  std::vector<Vec3> pts;
  for (int i = 0; i < 1000; ++i) pts.push_back(random_unit_vector(rng));
  const ConvexHull h = convex_hull(pts);
  EXPECT_EQ(h.vertices.size(), 1000u);
  expect_valid(h, pts, 2.0);
  for (const Vec3& p : pts) EXPECT_LE(std::abs(plane_distance(h, p)), 1e-9 * 2.0);
}

TEST(Hull, DegenerateInputs) {
  const std::vector<Vec3> flat = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0), Vec3(0.3, 0.4, 0)};
  try {
    convex_hull(flat);
    FAIL() << "expected DegenerateHull";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateHull);
  }
  const ConvexHull slab = convex_hull_inflated(flat);
  EXPECT_TRUE(slab.inflated);
  EXPECT_NEAR(slab.volume, 2e-4, 1e-10);
  for (const Vec3& p : flat) EXPECT_TRUE(hull_contains(slab, p, 1e-12));

  const std::vector<Vec3> line = {Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(0.5, 0.5, 0.5)};
  const ConvexHull rod = convex_hull_inflated(line);
  EXPECT_GT(rod.volume, 0.0);
  for (const Vec3& p : line) EXPECT_TRUE(hull_contains(rod, p, 1e-12));
  EXPECT_GT(convex_hull_inflated({Vec3(1, 2, 3)}).volume, 0.0);
  EXPECT_THROW(convex_hull_inflated({}), Error);
}

TEST(Hull, SignedDistanceOnABox) {
  const ConvexHull h = convex_hull(oracle::solid(shapes::box(Vec3::Zero(), Vec3(2, 1, 1))).vertices());
  const oracle::Box box{Vec3::Zero(), Vec3(2, 1, 1)};
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p(4 * uniform01(rng) - 1, 3 * uniform01(rng) - 1, 3 * uniform01(rng) - 1);
    Vec3 foot;
    const double d = signed_distance(h, p, &foot);
    if (box.contains(p)) {
      const Vec3 lo = p - box.lo, hi = box.hi - p;
      EXPECT_NEAR(d, -std::min(lo.minCoeff(), hi.minCoeff()), 1e-12);
    } else {
      EXPECT_NEAR(d, box.distance(p), 1e-12);
    }
    EXPECT_NEAR((foot - p).norm(), std::abs(d), 1e-12);
  }
}

TEST(Hull, SamplingStaysOnAndIn) {
  const ConvexHull h = convex_hull(oracle::solid(shapes::by_name("sphere")).vertices());
  Rng rng(4);
  double vol_inside = 0;
  for (int i = 0; i < 2000; ++i) {
    EXPECT_NEAR(plane_distance(h, sample_hull_surface(h, rng)), 0.0, 1e-12);
    vol_inside += hull_contains(h, sample_hull_volume(h, rng), 1e-12);
  }
  EXPECT_EQ(vol_inside, 2000);
}

TEST(Hull, FromMeshReproducesTheHull) {
  Rng rng(5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 200; ++i) pts.push_back(random_unit_vector(rng) * (0.5 + uniform01(rng)));
  const ConvexHull h = convex_hull(pts);
  std::vector<Face> flipped = h.faces;
  for (Face& f : flipped) std::swap(f[1], f[2]);
  const ConvexHull back = hull_from_mesh(h.vertices, flipped);
  EXPECT_NEAR(back.volume, h.volume, 1e-12);
  EXPECT_NEAR(back.area, h.area, 1e-12);
  Rng a(6), b(6);
  for (int i = 0; i < 20; ++i) {
    EXPECT_TRUE((sample_hull_surface(h, a) - sample_hull_surface(hull_from_mesh(h.vertices, h.faces), b)).norm() < 1e-12);
  }
}

TEST(Hull, ConvexityCheckRejectsTheLShape) {
  const SolidMesh l = oracle::solid(shapes::l_shape(1));
  EXPECT_FALSE(is_convex_polytope(l.vertices(), l.faces(), 1e-9));
  const SolidMesh c = oracle::solid(shapes::by_name("cube"));
  EXPECT_TRUE(is_convex_polytope(c.vertices(), c.faces(), 1e-9));
}
