#include "convfield/decompose.hpp"
#include "convfield/error.hpp"
#include "convfield/shapes.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace convfield;

namespace {

struct Scene {
  SolidMesh mesh;
  std::vector<SurfaceSample> samples;
  FeatureSet fs;
};

// Normalized L with one feature direction per arm plus a little noise. The
// corner block and the notch wall at y = 0 belong to the x-arm.
Scene labelled_l(double noise, std::uint64_t seed) {
  Scene s{normalize(oracle::solid(shapes::l_shape())), {}, {}};
  s.samples = sample_surface(s.mesh, 4000, seed);
  Rng rng(seed);
  s.fs.n = s.samples.size();
  s.fs.k = 8;
  s.fs.data.assign(s.fs.n * s.fs.k, 0.0);
  for (std::size_t i = 0; i < s.fs.n; ++i) {
    double* r = s.fs.row(i);
    r[s.samples[i].position.y() < 1e-9 ? 0 : 1] = 1.0;
    for (std::size_t c = 0; c < s.fs.k; ++c) r[c] += noise * standard_normal(rng);
  }
  normalize_rows(s.fs);
  return s;
}

DecomposeConfig config(double eps, std::size_t k, ClusterMode mode = ClusterMode::Mesh) {
  DecomposeConfig c;
  c.epsilon = eps;
  c.max_hulls = k;
  c.mode = mode;
  c.n_metric_samples = 5000;
  return c;
}

void expect_partition(const Decomposition& d, std::size_t n_samples, std::size_t n_faces,
                      ClusterMode mode) {
  std::vector<int> seen(n_samples, 0), faces(n_faces, 0);
  for (int id : d.leaves) {
    for (auto i : d.nodes[id].sample_ids) seen[i]++;
    for (auto f : d.nodes[id].face_ids) faces[f]++;
  }
  for (int c : seen) ASSERT_EQ(c, 1);
  if (mode == ClusterMode::Mesh) {
    for (int c : faces) ASSERT_EQ(c, 1);
  }
  EXPECT_LE(d.leaves.size(), d.max_hulls);
  for (int id : d.leaves) {
    const Component& c = d.nodes[id];
    EXPECT_TRUE(c.is_leaf);
    EXPECT_TRUE(c.concavity.value < d.epsilon || c.flag != LeafFlag::None);
  }
}

void expect_heap_order(const Decomposition& d) {
  double last = 1e300;
  for (const TraceEvent& e : d.trace) {
    if (e.kind == TraceEvent::Push) {
      last = 1e300;
      continue;
    }
    EXPECT_LE(e.concavity, last);
    last = e.concavity;
  }
}

} // namespace

TEST(Split, TwoSamplesGiveSingletons) {
  const Scene s = labelled_l(0.0, 1);
  Component c;
  c.sample_ids = {5, 9};
  Rng rng(1);
  const auto [a, b] = binary_split(s.mesh, s.samples, s.fs, c, ClusterMode::PointCloud, 0.15, rng);
  EXPECT_EQ(a.sample_ids.size(), 1u);
  EXPECT_EQ(b.sample_ids.size(), 1u);
  EXPECT_NE(a.sample_ids[0], b.sample_ids[0]);
}

TEST(Split, SingleFaceOrSampleIsIndivisible) {
  const Scene s = labelled_l(0.0, 2);
  Rng rng(2);
  Component face;
  face.face_ids = {s.samples[0].face_id};
  for (std::uint32_t i = 0; i < s.samples.size(); ++i) {
    if (s.samples[i].face_id == face.face_ids[0]) face.sample_ids.push_back(i);
  }
  try {
    binary_split(s.mesh, s.samples, s.fs, face, ClusterMode::Mesh, 0.15, rng);
    FAIL() << "expected Indivisible";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Indivisible);
  }
  Component point;
  point.sample_ids = {3};
  EXPECT_THROW(binary_split(s.mesh, s.samples, s.fs, point, ClusterMode::PointCloud, 0.15, rng), Error);
}

TEST(Split, IdenticalFeaturesStillSplitByConnectivity) {
  Scene s = labelled_l(0.0, 3);
  for (std::size_t i = 0; i < s.fs.n; ++i) {
    for (std::size_t c = 0; c < s.fs.k; ++c) s.fs.row(i)[c] = c == 0 ? 1.0 : 0.0;
  }
  Rng rng(3);
  const Component root = root_component(s.mesh, s.samples, ClusterMode::Mesh);
  const auto [a, b] = binary_split(s.mesh, s.samples, s.fs, root, ClusterMode::Mesh, 0.15, rng);
  ASSERT_FALSE(a.face_ids.empty());
  ASSERT_FALSE(b.face_ids.empty());
  EXPECT_EQ(a.face_ids.size() + b.face_ids.size(), s.mesh.num_faces());
  const double ratio = static_cast<double>(a.face_ids.size()) / s.mesh.num_faces();
  EXPECT_GT(ratio, 0.3);
  EXPECT_LT(ratio, 0.7);
}

TEST(Split, LabelledArmsSplitAtTheCrease) {
  const Scene s = labelled_l(0.3, 4);
  Rng rng(4);
  const Component root = root_component(s.mesh, s.samples, ClusterMode::Mesh);
  const auto [a, b] = binary_split(s.mesh, s.samples, s.fs, root, ClusterMode::Mesh, 0.15, rng);
  std::vector<int> side(s.mesh.num_faces(), -1);
  for (auto f : a.face_ids) side[f] = 0;
  for (auto f : b.face_ids) side[f] = 1;
  // every boundary edge between the two parts lies within two faces (0.5) of
  // the cut plane y = 0
  int edges = 0, near = 0;
  for (std::uint32_t f = 0; f < s.mesh.num_faces(); ++f) {
    for (int e = 0; e < 3; ++e) {
      const std::uint32_t g = s.mesh.face_neighbors()[f][e];
      if (g <= f || side[f] == side[g]) continue;
      const Face& face = s.mesh.faces()[f];
      const Vec3 mid = 0.5 * (s.mesh.vertices()[face[e]] + s.mesh.vertices()[face[(e + 1) % 3]]);
      ++edges;
      near += std::abs(mid.y()) <= 0.5 + 1e-9;
    }
  }
  ASSERT_GT(edges, 0);
  EXPECT_GE(near, 0.9 * edges);
}

TEST(Split, PointCloudModeSeparatesLabelledArms) {
  const Scene s = labelled_l(0.1, 5);
  Rng rng(5);
  const Component root = root_component(s.mesh, s.samples, ClusterMode::PointCloud);
  const auto [a, b] = binary_split(s.mesh, s.samples, s.fs, root, ClusterMode::PointCloud, 0.15, rng);
  EXPECT_TRUE(a.face_ids.empty());
  int wrong = 0;
  const bool a_is_x = s.samples[a.sample_ids[0]].position.y() < 1e-9;
  for (auto i : a.sample_ids) wrong += (s.samples[i].position.y() < 1e-9) != a_is_x;
  for (auto i : b.sample_ids) wrong += (s.samples[i].position.y() < 1e-9) == a_is_x;
  EXPECT_LT(wrong, 0.02 * s.samples.size());
}

TEST(Recursive, LShapeWithArmFeaturesGivesTwoBoxes) {
  const Scene s = labelled_l(0.2, 6);
  const Decomposition d = recursive_decompose(s.mesh, s.samples, s.fs, config(0.02, 8));
  ASSERT_EQ(d.leaves.size(), 2u);
  expect_partition(d, s.samples.size(), s.mesh.num_faces(), ClusterMode::Mesh);
  expect_heap_order(d);
  const oracle::Box x_arm{Vec3(-1, -1, -0.5), Vec3(1, 0, 0.5)};
  const oracle::Box y_arm{Vec3(-1, 0, -0.5), Vec3(0, 1, 0.5)};
  for (int id : d.leaves) {
    EXPECT_LT(d.nodes[id].concavity.value, 1e-2);
    const ConvexHull& h = d.nodes[id].hull;
    EXPECT_LT(std::min(oracle::hull_box_chamfer(h, x_arm), oracle::hull_box_chamfer(h, y_arm)), 1e-2);
  }
}

TEST(Recursive, CubeIsOneComponent) {
  const SolidMesh cube = normalize(oracle::solid(shapes::gridded_cube(4)));
  const auto samples = sample_surface(cube, 1000, 7);
  Rng rng(7);
  const FeatureSet fs = random_features(samples.size(), 4, 0.1, rng);
  const Decomposition d = recursive_decompose(cube, samples, fs, config(0.05, 8));
  ASSERT_EQ(d.leaves.size(), 1u);
  EXPECT_LT(d.nodes[d.leaves[0]].concavity.value, 1e-2);
  EXPECT_EQ(d.nodes[d.leaves[0]].flag, LeafFlag::None);
}

TEST(Recursive, CapOfOneKeepsTheWholeShape) {
  const Scene s = labelled_l(0.2, 8);
  const Decomposition d = recursive_decompose(s.mesh, s.samples, s.fs, config(0.02, 1));
  ASSERT_EQ(d.leaves.size(), 1u);
  EXPECT_EQ(d.leaves[0], 0);
  EXPECT_EQ(d.nodes[0].flag, LeafFlag::CapReached);
  EXPECT_EQ(d.nodes[0].face_ids.size(), s.mesh.num_faces());
}

TEST(Recursive, RandomFeaturesTerminateWithAValidPartition) {
  const SolidMesh m = normalize(oracle::solid(shapes::by_name("star")));
  const auto samples = sample_surface(m, 2000, 9);
  Rng rng(9);
  const FeatureSet fs = random_features(samples.size(), 8, 0.1, rng);
  for (ClusterMode mode : {ClusterMode::Mesh, ClusterMode::PointCloud}) {
    for (std::size_t cap : {1u, 3u, 6u}) {
      const Decomposition d = recursive_decompose(m, samples, fs, config(0.01, cap, mode));
      expect_partition(d, samples.size(), m.num_faces(), mode);
      expect_heap_order(d);
    }
  }
}

TEST(Recursive, DeterministicTrees) {
  const Scene s = labelled_l(0.5, 10);
  for (ClusterMode mode : {ClusterMode::Mesh, ClusterMode::PointCloud}) {
    const Decomposition a = recursive_decompose(s.mesh, s.samples, s.fs, config(0.02, 6, mode));
    const Decomposition b = recursive_decompose(s.mesh, s.samples, s.fs, config(0.02, 6, mode));
    ASSERT_EQ(a.nodes.size(), b.nodes.size());
    EXPECT_EQ(a.leaves, b.leaves);
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
      EXPECT_EQ(a.nodes[i].sample_ids, b.nodes[i].sample_ids);
      EXPECT_EQ(a.nodes[i].concavity.value, b.nodes[i].concavity.value);
    }
  }
}

TEST(Recursive, ScoresReproduceFromSampleIds) {
  const Scene s = labelled_l(0.2, 11);
  const DecomposeConfig cfg = config(0.02, 8);
  const Decomposition d = recursive_decompose(s.mesh, s.samples, s.fs, cfg);
  for (int id : d.leaves) {
    const Component& c = d.nodes[id];
    const ConvexHull h = component_hull(s.mesh, s.samples, c, cfg.mode);
    EXPECT_EQ(h.volume, c.hull.volume);
    EXPECT_EQ(concavity(s.mesh, h, cfg.n_metric_samples, derive_seed(cfg.seed, 0xc0ca)).value,
              c.concavity.value);
  }
}

TEST(Sweep, ComponentCountsGrowAsEpsilonShrinks) {
  const SolidMesh m = normalize(oracle::solid(shapes::by_name("u_shape")));
  const auto samples = sample_surface(m, 2000, 12);
  Rng rng(12);
  const FeatureSet fs = random_features(samples.size(), 8, 0.1, rng);
  std::vector<SweepRow> rows;
  const auto ds = granularity_sweep(m, samples, fs, {0.2, 0.1, 0.05}, config(0.1, 12), &rows);
  ASSERT_EQ(ds.size(), 3u);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GE(rows[i].components, rows[i - 1].components);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    expect_partition(ds[i], samples.size(), m.num_faces(), ClusterMode::Mesh);
    EXPECT_EQ(rows[i].components, ds[i].leaves.size());
  }
  // epsilon above the whole shape's concavity: nothing to split
  const auto big = granularity_sweep(m, samples, fs, {1.0, 0.99}, config(0.1, 12), &rows);
  for (const auto& r : rows) EXPECT_EQ(r.components, 1u);
  EXPECT_THROW(granularity_sweep(m, samples, fs, {0.1, 0.2}, config(0.1, 12)), Error);
}

TEST(Export, TreeDotListsEveryNode) {
  const Scene s = labelled_l(0.2, 13);
  const Decomposition d = recursive_decompose(s.mesh, s.samples, s.fs, config(0.02, 8));
  const auto path = oracle::scratch_dir("dot") / "tree.dot";
  write_tree_dot(path, d);
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text.rfind("digraph", 0), 0u);
  for (const Component& c : d.nodes) {
    EXPECT_NE(text.find("n" + std::to_string(c.id) + " ["), std::string::npos);
  }
}
