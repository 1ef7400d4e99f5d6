#include "convfield/error.hpp"
#include "convfield/oracle.hpp"
#include "convfield/shapes.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace convfield;

namespace {

SolidMesh prepared(const char* name) { return normalize(oracle::solid(shapes::by_name(name))); }

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

TripletConfig small_config() {
  TripletConfig c;
  c.n_anchors = 96;
  c.n_pos_per_anchor = 8;
  c.n_neg_candidates = 64;
  c.n_neg_per_triplet = 32;
  c.triplets_per_anchor = 2;
  return c;
}

} // namespace

TEST(ConvexPair, CubeAllPairsConvex) {
  const SolidMesh cube = oracle::solid(shapes::by_name("cube"));
  EXPECT_TRUE(is_convex_pair(cube, Vec3(1, 0, 0), Vec3(-1, 0, 0)));
  const auto s = sample_surface(cube, 400, 1);
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
    EXPECT_TRUE(is_convex_pair(cube, s[i].position, s[i + 1].position));
  }
}

TEST(ConvexPair, AcrossTheLNotch) {
  // raw l_shape: arm ends at x = 2 (y in [0,1]) and y = 2 (x in [0,1])
  const SolidMesh l = oracle::solid(shapes::l_shape());
  const Vec3 a(2.0, 0.8, 0.5), b(0.8, 2.0, 0.5);
  EXPECT_FALSE(is_convex_pair(l, a, b));
  EXPECT_FALSE(oracle::segment_inside(l, a, b));
  const Vec3 c(2.0, 0.2, 0.5), d(0.2, 2.0, 0.5);
  EXPECT_EQ(is_convex_pair(l, c, d), oracle::segment_inside(l, c, d));
}

TEST(ConvexPair, TorusAcrossTheHole) {
  const SolidMesh t = oracle::solid(shapes::by_name("torus"));
  // outer equator points on opposite sides, major 0.7 + minor 0.3
  const Vec3 a(1.0, 0, 0), b(-1.0, 0, 0);
  EXPECT_FALSE(is_convex_pair(t, a, b));
  EXPECT_FALSE(oracle::segment_inside(t, a, b));
}

TEST(ConvexPair, AgreesWithBruteForceAndIsSymmetric) {
  for (const char* name : {"cube", "l_shape", "torus", "star", "blob"}) {
    const SolidMesh m = prepared(name);
    const auto s = sample_surface(m, 600, 5);
    int agree = 0;
    int total = 0;
    for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
      const Vec3& a = s[i].position;
      const Vec3& b = s[i + 1].position;
      if ((a - b).norm() < 1e-9) continue;
      const bool got = is_convex_pair(m, a, b);
      EXPECT_EQ(got, is_convex_pair(m, b, a));
      agree += got == oracle::segment_inside(m, a, b);
      ++total;
    }
    EXPECT_GE(agree, 0.99 * total) << name;
  }
}

TEST(Positive, CubeAndTriesZero) {
  const SolidMesh cube = oracle::solid(shapes::by_name("cube"));
  Rng rng(3);
  SurfaceSample anchor{Vec3(1, 0.2, -0.3), Vec3::UnitX(), 0};
  for (std::uint32_t f = 0; f < cube.num_faces(); ++f) {
    if (cube.face_normals()[f].x() > 0.5) anchor.face_id = f;
  }
  for (int i = 0; i < 50; ++i) {
    const auto p = sample_positive(cube, anchor, 8, rng);
    ASSERT_TRUE(p.has_value());
    EXPECT_LT(p->position.x(), 1.0 - 1e-6);
    EXPECT_TRUE(is_convex_pair(cube, anchor.position, p->position));
  }
  EXPECT_FALSE(sample_positive(cube, anchor, 0, rng).has_value());
}

TEST(Positive, LInnerCornerPositivesAreConvex) {
  const SolidMesh l = oracle::solid(shapes::l_shape());
  // points on the two notch walls next to the inner edge x = y = 1
  Rng rng(4);
  const auto samples = sample_surface(l, 20000, 4);
  int tested = 0;
  for (const SurfaceSample& s : samples) {
    const Vec3& p = s.position;
    if (std::abs(p.x() - 1.0) + std::abs(p.y() - 1.0) > 0.15 || p.x() < 0.99 || p.y() < 0.99) continue;
    for (int i = 0; i < 5; ++i) {
      const auto q = sample_positive(l, s, 8, rng);
      if (!q) continue;
      ++tested;
      EXPECT_TRUE(oracle::segment_inside(l, s.position, q->position, 256));
    }
  }
  EXPECT_GT(tested, 20);
}

TEST(Negatives, WeightFormulaAndClamp) {
  EXPECT_DOUBLE_EQ(negative_weight(Vec3::Zero(), Vec3(0.5, 0, 0)), 4.0);
  EXPECT_DOUBLE_EQ(negative_weight(Vec3::Zero(), Vec3(1.0, 0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(negative_weight(Vec3::Zero(), Vec3(1e-6, 0, 0)), 1.0 / (0.02 * 0.02));
}

TEST(Negatives, CubeHasNone) {
  const SolidMesh cube = oracle::solid(shapes::by_name("cube"));
  const auto pool = sample_surface(cube, 500, 6);
  Rng rng(6);
  EXPECT_TRUE(sample_negatives(cube, pool[0], pool, 50, rng).empty());
}

TEST(Negatives, ClusterNearTheNotch) {
  const SolidMesh l = prepared("l_shape");
  const auto pool = sample_surface(l, 4000, 7);
  // normalized notch edge runs along x = y = 0; anchor on the x-arm wall
  SurfaceSample anchor;
  double best = 1e9;
  for (const SurfaceSample& s : pool) {
    const double d = (s.position - Vec3(0.1, 0.0, 0.0)).norm();
    if (s.normal.y() > 0.9 && d < best) {
      best = d;
      anchor = s;
    }
  }
  Rng rng(7);
  const auto negs = sample_negatives(l, anchor, pool, 300, rng);
  ASSERT_GT(negs.size(), 50u);
  std::vector<double> dn, dp;
  for (const auto& n : negs) {
    dn.push_back((n.position - anchor.position).norm());
    EXPECT_FALSE(is_convex_pair(l, anchor.position, n.position));
  }
  for (const auto& p : pool) dp.push_back((p.position - anchor.position).norm());
  EXPECT_LT(median(dn), median(dp));
}

TEST(Negatives, AcceptanceFrequencyFallsWithDistance) {
  // candidate pool binned by distance: per-candidate draw frequency must not
  // increase with distance
  const SolidMesh l = prepared("l_shape");
  const auto pool = sample_surface(l, 3000, 8);
  const Vec3 anchor = pool[0].position;
  std::vector<double> w;
  for (const auto& p : pool) w.push_back(negative_weight(anchor, p.position));
  const WeightedSampler sampler(w);
  Rng rng(8);
  const int bins = 6;
  double max_d = 0;
  for (const auto& p : pool) max_d = std::max(max_d, (p.position - anchor).norm());
  std::vector<double> members(bins, 0), draws(bins, 0);
  auto bin_of = [&](const Vec3& p) {
    const double d = (p - anchor).norm();
    return std::min(bins - 1, static_cast<int>(d / max_d * bins));
  };
  for (const auto& p : pool) members[bin_of(p.position)] += 1;
  for (int i = 0; i < 200000; ++i) draws[bin_of(pool[sampler.draw(rng)].position)] += 1;
  double prev = 1e300;
  for (int b = 0; b < bins; ++b) {
    if (members[b] < 30) continue;
    const double freq = draws[b] / members[b];
    EXPECT_LE(freq, prev * 1.05) << "bin " << b;
    prev = freq;
  }
}

TEST(Negatives, WeightedChoiceWithoutReplacementIsDistinct) {
  std::vector<double> w(100);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 + static_cast<double>(i);
  Rng rng(9);
  auto pick = weighted_choice_without_replacement(w, 40, rng);
  ASSERT_EQ(pick.size(), 40u);
  std::sort(pick.begin(), pick.end());
  EXPECT_EQ(std::unique(pick.begin(), pick.end()), pick.end());
  EXPECT_EQ(weighted_choice_without_replacement(w, 200, rng).size(), 100u);
}

TEST(Triplets, CubeStarves) {
  const SolidMesh cube = prepared("cube");
  const auto samples = sample_surface(cube, 2000, 10);
  try {
    build_triplets(cube, samples, small_config(), 10);
    FAIL() << "expected OracleStarvation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OracleStarvation);
  }
}

TEST(Triplets, LShapeTripletsReverify) {
  const SolidMesh l = prepared("l_shape");
  const auto samples = sample_surface(l, 3000, 11);
  const TripletSet set = build_triplets(l, samples, small_config(), 11);
  ASSERT_FALSE(set.triplets.empty());
  EXPECT_EQ(set.n_surface, samples.size());
  EXPECT_EQ(set.anchors_tried, 96u);
  for (const Triplet& t : set.triplets) {
    const Vec3& x = set.points[t.anchor].position;
    EXPECT_NE(t.anchor, t.positive);
    EXPECT_TRUE(is_convex_pair(l, x, set.points[t.positive].position));
    EXPECT_TRUE(oracle::segment_inside(l, x, set.points[t.positive].position, 128));
    std::vector<std::uint32_t> negs = t.negatives;
    std::sort(negs.begin(), negs.end());
    EXPECT_EQ(std::unique(negs.begin(), negs.end()), negs.end());
    EXPECT_LE(t.negatives.size(), 32u);
    for (auto n : t.negatives) EXPECT_FALSE(is_convex_pair(l, x, set.points[n].position));
  }
}

TEST(Triplets, DeterministicAndRoundTrip) {
  const SolidMesh l = prepared("l_shape");
  const auto samples = sample_surface(l, 2000, 12);
  const TripletSet a = build_triplets(l, samples, small_config(), 12);
  const TripletSet b = build_triplets(l, samples, small_config(), 12);
  ASSERT_EQ(a.triplets.size(), b.triplets.size());
  for (std::size_t i = 0; i < a.triplets.size(); ++i) {
    EXPECT_EQ(a.triplets[i].anchor, b.triplets[i].anchor);
    EXPECT_EQ(a.triplets[i].positive, b.triplets[i].positive);
    EXPECT_EQ(a.triplets[i].negatives, b.triplets[i].negatives);
  }
  const auto path = oracle::scratch_dir("triplets") / "t.bin";
  write_triplets(path, a);
  const auto records = read_triplets(path);
  ASSERT_EQ(records.size(), a.triplets.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Triplet& t = a.triplets[i];
    EXPECT_NEAR((records[i].anchor.position - a.points[t.anchor].position).norm(), 0, 1e-6);
    EXPECT_NEAR((records[i].positive.position - a.points[t.positive].position).norm(), 0, 1e-6);
    ASSERT_EQ(records[i].negatives.size(), t.negatives.size());
  }
}
