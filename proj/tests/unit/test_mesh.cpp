#include "convfield/bvh.hpp"
#include "convfield/error.hpp"
#include "convfield/mesh.hpp"
#include "convfield/remesh.hpp"
#include "convfield/shapes.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

using namespace convfield;
namespace fs = std::filesystem;

namespace {

const char* kCubeObj = R"(# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3
f 1 3 2
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 4 8 7
f 4 7 3
f 1 5 8
f 1 8 4
f 2 3 7
f 2 7 6
)";

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  std::ofstream(dir / name) << text;
  return dir / name;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Internal;
}

Vec3 random_direction(Rng& rng) { return random_unit_vector(rng); }

} // namespace

TEST(MeshLoad, UnitCubeObj) {
  const auto dir = oracle::scratch_dir("mesh_load");
  const SolidMesh m = load_mesh(write_file(dir, "cube.obj", kCubeObj), MeshFormat::Obj);
  EXPECT_EQ(m.num_faces(), 12u);
  EXPECT_EQ(m.vertices().size(), 8u);
  EXPECT_NEAR(m.volume(), 1.0, 1e-12);
}

TEST(MeshLoad, OutOfRangeIndexIsParseError) {
  const auto dir = oracle::scratch_dir("mesh_parse");
  std::string text = kCubeObj;
  text += "f 1 2 999\n";
  const auto path = write_file(dir, "bad.obj", text);
  EXPECT_EQ(kind_of([&] { load_mesh(path, MeshFormat::Obj); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([&] { load_mesh(dir / "missing.obj", MeshFormat::Obj); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_obj("v 0 0 zero\n"); }), ErrorKind::Parse);
}

TEST(MeshLoad, OpenBoundaryIsNonManifold) {
  const auto dir = oracle::scratch_dir("mesh_open");
  std::string text = kCubeObj;
  text = text.substr(0, text.rfind("f 2 7 6"));
  const auto path = write_file(dir, "open.obj", text);
  EXPECT_EQ(kind_of([&] { load_mesh(path, MeshFormat::Obj); }), ErrorKind::NonManifold);
}

TEST(MeshLoad, PolygonsAreFanTriangulatedAndDuplicatesMerged) {
  const std::string quad_cube = R"(v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
v 0 0 0
f 9 4 3 2
f 5 6 7 8
f 1 2 6 5
f 4 8 7 3
f 1 5 8 4
f 2 3 7 6
)";
  const TriangleMesh raw = deduplicate_vertices(parse_obj(quad_cube));
  EXPECT_EQ(raw.vertices.size(), 8u);
  EXPECT_EQ(raw.faces.size(), 12u);
  EXPECT_NEAR(SolidMesh::from_triangles(raw).volume(), 1.0, 1e-12);
}

TEST(MeshLoad, PlyAsciiAndBinaryAgree) {
  const auto dir = oracle::scratch_dir("mesh_ply");
  const TriangleMesh cube = shapes::box(Vec3::Zero(), Vec3::Ones());
  std::string ascii = "ply\nformat ascii 1.0\nelement vertex 8\nproperty float x\nproperty float y\n"
                      "property float z\nelement face 12\nproperty list uchar int vertex_indices\n"
                      "end_header\n";
  for (const Vec3& v : cube.vertices) {
    ascii += std::to_string(v.x()) + " " + std::to_string(v.y()) + " " + std::to_string(v.z()) + "\n";
  }
  for (const Face& f : cube.faces) {
    ascii += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
  }
  const SolidMesh a = load_mesh(write_file(dir, "a.ply", ascii), MeshFormat::Ply);

  std::ofstream bin(dir / "b.ply", std::ios::binary);
  bin << "ply\nformat binary_little_endian 1.0\nelement vertex 8\nproperty float x\n"
         "property float y\nproperty float z\nelement face 12\n"
         "property list uchar int vertex_indices\nend_header\n";
  for (const Vec3& v : cube.vertices) {
    for (int c = 0; c < 3; ++c) {
      const float x = static_cast<float>(v[c]);
      bin.write(reinterpret_cast<const char*>(&x), 4);
    }
  }
  for (const Face& f : cube.faces) {
    const unsigned char n = 3;
    bin.write(reinterpret_cast<const char*>(&n), 1);
    for (std::uint32_t i : f) {
      const std::int32_t v = static_cast<std::int32_t>(i);
      bin.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  bin.close();
  const SolidMesh b = load_mesh(dir / "b.ply", MeshFormat::Ply);
  EXPECT_EQ(a.num_faces(), 12u);
  EXPECT_EQ(b.num_faces(), 12u);
  EXPECT_NEAR(a.volume(), 1.0, 1e-6);
  EXPECT_NEAR(b.volume(), 1.0, 1e-6);
}

TEST(MeshLoad, DegenerateFacesDroppedWithWarning) {
  TriangleMesh m = shapes::box(Vec3::Zero(), Vec3::Ones());
  m.faces.push_back({0, 0, 1});
  m.faces.push_back({0, 1, 0});
  std::vector<std::string> warnings;
  const SolidMesh s = SolidMesh::from_triangles(m, &warnings);
  EXPECT_EQ(s.num_faces(), 12u);
  EXPECT_FALSE(warnings.empty());
}

TEST(MeshLoad, InwardWindingIsReoriented) {
  TriangleMesh m = shapes::box(Vec3::Zero(), Vec3::Ones());
  for (Face& f : m.faces) std::swap(f[1], f[2]);
  const SolidMesh s = SolidMesh::from_triangles(m);
  EXPECT_NEAR(s.volume(), 1.0, 1e-12);
  for (std::uint32_t f = 0; f < s.num_faces(); ++f) {
    const Vec3 inner = s.face_centroid(f) - 1e-3 * s.face_normals()[f];
    EXPECT_TRUE(is_inside(s, inner));
  }
}

TEST(Normalize, MapsLongestExtentToTwo) {
  const SolidMesh m = oracle::solid(shapes::box(Vec3(0, 0, 0), Vec3(4, 2, 2)));
  NormalizeTransform t;
  const SolidMesh n = normalize(m, &t);
  EXPECT_TRUE(n.bounds().min.isApprox(Vec3(-1, -0.5, -0.5), 1e-15));
  EXPECT_TRUE(n.bounds().max.isApprox(Vec3(1, 0.5, 0.5), 1e-15));
  EXPECT_DOUBLE_EQ(t.scale, 0.5);
  EXPECT_TRUE(t.center.isApprox(Vec3(2, 1, 1)));
}

TEST(Normalize, Idempotent) {
  for (const char* name : {"cube", "l_shape", "torus", "blob"}) {
    const SolidMesh once = normalize(oracle::solid(shapes::by_name(name)));
    const SolidMesh twice = normalize(once);
    ASSERT_EQ(once.vertices().size(), twice.vertices().size());
    for (std::size_t i = 0; i < once.vertices().size(); ++i) {
      EXPECT_LE((once.vertices()[i] - twice.vertices()[i]).norm(), 1e-12) << name;
    }
  }
}

TEST(Normalize, ZeroExtentIsDegenerate) {
  // a flat but closed surface still normalizes by its longest axis
  const SolidMesh sheet = oracle::solid(shapes::flat_sheet());
  const SolidMesh n = normalize(sheet);
  EXPECT_NEAR(n.bounds().extent().maxCoeff(), 2.0, 1e-15);

  TriangleMesh point;
  point.vertices = {Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1)};
  point.faces = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}, {1, 3, 2}};
  // every face is dropped as degenerate, leaving nothing to scale
  EXPECT_EQ(kind_of([&] { normalize(SolidMesh::from_triangles(point)); }),
            ErrorKind::DegenerateGeometry);
}

TEST(Sampling, CubeFacesGetMultinomialShares) {
  const SolidMesh cube = oracle::solid(shapes::by_name("cube"));
  const auto samples = sample_surface(cube, 60000, 7);
  std::map<int, int> per_side;
  for (const SurfaceSample& s : samples) {
    int axis = 0;
    s.normal.cwiseAbs().maxCoeff(&axis);
    per_side[axis * 2 + (s.normal[axis] > 0 ? 1 : 0)]++;
  }
  ASSERT_EQ(per_side.size(), 6u);
  // 3 sigma of Binomial(60000, 1/6)
  const double sigma = std::sqrt(60000.0 * (1.0 / 6) * (5.0 / 6));
  double chi2 = 0;
  for (auto [side, count] : per_side) {
    EXPECT_NEAR(count, 10000, 3 * sigma) << side;
    chi2 += (count - 10000.0) * (count - 10000.0) / 10000.0;
  }
  // chi-squared, 5 dof, p = 0.001
  EXPECT_LT(chi2, 20.515);
  for (const SurfaceSample& s : samples) {
    const Face& f = cube.faces()[s.face_id];
    const double off = cube.face_normals()[s.face_id].dot(s.position - cube.vertices()[f[0]]);
    ASSERT_LE(std::abs(off), 1e-7 * cube.diagonal());
  }
}

TEST(Sampling, DeterministicAndSingle) {
  const SolidMesh m = oracle::solid(shapes::by_name("blob"));
  const auto a = sample_surface(m, 1000, 42);
  const auto b = sample_surface(m, 1000, 42);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].position, b[i].position);
    EXPECT_EQ(a[i].face_id, b[i].face_id);
  }
  const auto one = sample_surface(m, 1, 3);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_LT(one[0].face_id, m.num_faces());
}

TEST(Rays, CubeHitAndMiss) {
  const SolidMesh cube = oracle::solid(shapes::by_name("cube"));
  const auto hit = cast_ray(cube, Vec3::Zero(), Vec3::UnitX());
  ASSERT_TRUE(hit.has_value());
  EXPECT_NEAR(hit->t, 1.0, 1e-12);
  EXPECT_NEAR(hit->normal.x(), 1.0, 1e-12);
  EXPECT_FALSE(cast_ray(cube, Vec3(2, 0, 0), Vec3::UnitX()).has_value());
}

TEST(Rays, BvhMatchesBruteForce) {
  for (const char* name : {"cube", "l_shape", "torus", "star", "blob"}) {
    const SolidMesh m = normalize(oracle::solid(shapes::by_name(name)));
    Rng rng(11);
    int hits = 0;
    for (int i = 0; i < 1000; ++i) {
      const Vec3 o = 1.5 * Vec3(uniform01(rng), uniform01(rng), uniform01(rng)) - 0.75 * Vec3::Ones();
      const Vec3 d = random_direction(rng);
      const auto a = cast_ray(m, o, d, 0.0, 10.0);
      const auto b = cast_ray_brute_force(m, o, d, 0.0, 10.0);
      ASSERT_EQ(a.has_value(), b.has_value()) << name << " ray " << i;
      if (a) {
        ++hits;
        EXPECT_EQ(a->t, b->t);
        EXPECT_EQ(a->face_id, b->face_id);
      }
      EXPECT_EQ(ray_blocked(m, o, d, 0.0, 10.0), b.has_value());
    }
    EXPECT_GT(hits, 300) << name;
  }
}

TEST(Rays, ExteriorRaysCrossEvenly) {
  for (const char* name : {"cube", "l_shape", "torus", "star", "blob", "two_boxes"}) {
    const SolidMesh m = normalize(oracle::solid(shapes::by_name(name)));
    Rng rng(12);
    for (int i = 0; i < 10000; ++i) {
      const Vec3 o = 3.0 * random_direction(rng);
      const Vec3 d = (0.5 * random_direction(rng) - o).normalized();
      ASSERT_EQ(count_crossings(m, o, d, 0.0) % 2, 0u) << name << " ray " << i;
    }
  }
}

TEST(Inside, CubeAndLNotch) {
  const SolidMesh cube = oracle::solid(shapes::by_name("cube"));
  EXPECT_TRUE(is_inside(cube, Vec3::Zero()));
  EXPECT_FALSE(is_inside(cube, Vec3(2, 0, 0)));
  // l_shape: [0,2]x[0,1]x[0,1] u [0,1]x[0,2]x[0,1]; the notch is [1,2]x[1,2]
  const SolidMesh l = oracle::solid(shapes::l_shape());
  EXPECT_FALSE(is_inside(l, Vec3(1.5, 1.5, 0.5)));
  EXPECT_TRUE(is_inside(l, Vec3(1.5, 0.5, 0.5)));
  EXPECT_TRUE(is_inside(l, Vec3(0.5, 1.5, 0.5)));
  // grid points against the two-box description
  Rng rng(13);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p(2.2 * uniform01(rng) - 0.1, 2.2 * uniform01(rng) - 0.1, 1.2 * uniform01(rng) - 0.1);
    const bool truth = oracle::l_arm_x().contains(p) || oracle::l_arm_y().contains(p);
    if (oracle::l_solid_distance(p) < 1e-6 && !truth) continue;
    EXPECT_EQ(is_inside(l, p), truth) << p.transpose();
  }
}

TEST(VolumeSampling, CubeSphereAndSheet) {
  const SolidMesh cube = oracle::solid(shapes::by_name("cube"));
  for (const Vec3& p : sample_volume(cube, 1000, 1)) EXPECT_LE(p.cwiseAbs().maxCoeff(), 1.0);

  const SolidMesh sphere = normalize(oracle::solid(shapes::icosphere(4)));
  VolumeSampleStats stats;
  sample_volume(sphere, 20000, 2, &stats);
  EXPECT_NEAR(stats.acceptance(), std::numbers::pi / 6, 0.02);

  const SolidMesh sheet = oracle::solid(shapes::flat_sheet());
  EXPECT_EQ(kind_of([&] { sample_volume(sheet, 10, 3); }), ErrorKind::LowAcceptance);
}

TEST(ClosestPoint, MatchesTriangleScan) {
  const SolidMesh m = normalize(oracle::solid(shapes::by_name("blob")));
  Rng rng(14);
  for (int i = 0; i < 300; ++i) {
    const Vec3 p = 1.4 * random_direction(rng) * uniform01(rng);
    double best = 1e300;
    for (const Face& f : m.faces()) {
      const Vec3 q = closest_point_on_triangle(p, m.vertices()[f[0]], m.vertices()[f[1]], m.vertices()[f[2]]);
      best = std::min(best, (q - p).norm());
    }
    EXPECT_NEAR(closest_point(m, p).distance, best, 1e-12);
  }
}

TEST(Refine, KeepsSolidAndBoundsEdges) {
  const SolidMesh l = normalize(oracle::solid(shapes::l_shape(1)));
  const SolidMesh r = refine(l, 0.2);
  EXPECT_NEAR(r.volume(), l.volume(), 1e-12);
  EXPECT_NEAR(r.total_area(), l.total_area(), 1e-12);
  for (const Face& f : r.faces()) {
    for (int e = 0; e < 3; ++e) {
      EXPECT_LE((r.vertices()[f[e]] - r.vertices()[f[(e + 1) % 3]]).norm(), 0.2 + 1e-12);
    }
  }
}

TEST(Remesh, RepairsOpenSurface) {
  TriangleMesh open = shapes::box(-Vec3::Ones(), Vec3::Ones());
  open.faces.pop_back();
  const SolidMesh fixed = SolidMesh::from_triangles(voxel_repair(open, 32));
  // closed offset surface enclosing the original cube
  EXPECT_GT(fixed.volume(), 8.0);
  EXPECT_LT(fixed.volume(), 8.0 * 1.4);
  EXPECT_TRUE(is_inside(fixed, Vec3::Zero()));
}
