#include "convfield/decompose.hpp"

#include "convfield/error.hpp"
#include "convfield/point_index.hpp"
#include "convfield/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <queue>
#include <tuple>

namespace convfield {

ClusterMode cluster_mode_from_string(const std::string& s) {
  if (s == "mesh") return ClusterMode::Mesh;
  if (s == "pointcloud") return ClusterMode::PointCloud;
  fail(ErrorKind::InvalidArgument, "unknown mode '" + s + "' (expected mesh or pointcloud)");
}

std::string to_string(ClusterMode mode) {
  return mode == ClusterMode::Mesh ? "mesh" : "pointcloud";
}

std::string to_string(LeafFlag flag) {
  switch (flag) {
    case LeafFlag::None: return "none";
    case LeafFlag::CapReached: return "cap_reached";
    case LeafFlag::Indivisible: return "indivisible";
    case LeafFlag::NoProgress: return "no_progress";
    case LeafFlag::Flushed: return "flushed";
  }
  return "none";
}

double Decomposition::max_concavity() const {
  double m = 0.0;
  for (int id : leaves) m = std::max(m, nodes[id].concavity.value);
  return m;
}

std::vector<ConvexHull> Decomposition::leaf_hulls() const {
  std::vector<ConvexHull> out;
  out.reserve(leaves.size());
  for (int id : leaves) out.push_back(nodes[id].hull);
  return out;
}

namespace {

using Ids = std::vector<std::uint32_t>;

void normalize_in_place(double* v, std::size_t k) {
  const double len = std::sqrt(simd::dot(v, v, k));
  if (len > 1e-12) {
    for (std::size_t j = 0; j < k; ++j) v[j] /= len;
  }
}

} // namespace

Splitter::Splitter(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                   const FeatureSet& fs, ClusterMode mode, double blend_weight)
    : mesh_(mesh), samples_(samples), fs_(fs), mode_(mode), blend_weight_(blend_weight), k_(fs.k) {
  if (fs.n != samples.size()) {
    fail(ErrorKind::InvalidArgument, "feature rows do not match the sample count");
  }
  if (!(blend_weight >= 0.0 && blend_weight <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "blend_weight must lie in [0, 1]");
  }
  const std::size_t nf = mesh.num_faces();
  face_samples_.resize(nf);
  for (std::uint32_t i = 0; i < samples.size(); ++i) {
    if (samples[i].face_id >= nf) fail(ErrorKind::InvalidArgument, "sample face id out of range");
    face_samples_[samples[i].face_id].push_back(i);
  }
  centroids_.resize(nf);
  for (std::uint32_t f = 0; f < nf; ++f) centroids_[f] = mesh.face_centroid(f);
  if (mode != ClusterMode::Mesh) return;

  face_features_.assign(nf * k_, 0.0);
  std::vector<std::uint32_t> sampled;
  for (std::uint32_t f = 0; f < nf; ++f) {
    if (face_samples_[f].empty()) continue;
    double* out = face_features_.data() + f * k_;
    for (std::uint32_t s : face_samples_[f]) simd::axpy(1.0, fs.row(s), out, k_);
    normalize_in_place(out, k_);
    sampled.push_back(f);
  }
  if (sampled.empty()) fail(ErrorKind::InvalidArgument, "no face carries a sample");
  if (sampled.size() < nf) {
    std::vector<Vec3> pts;
    pts.reserve(sampled.size());
    for (std::uint32_t f : sampled) pts.push_back(centroids_[f]);
    const PointIndex index(pts);
    for (std::uint32_t f = 0; f < nf; ++f) {
      if (!face_samples_[f].empty()) continue;
      const std::uint32_t src = sampled[index.nearest(centroids_[f]).index];
      std::copy_n(face_features_.data() + src * k_, k_, face_features_.data() + f * k_);
    }
  }
}

std::pair<Ids, Ids> Splitter::balanced_bfs(const Ids& faces) const {
  std::vector<int> local(mesh_.num_faces(), -1);
  for (std::size_t i = 0; i < faces.size(); ++i) local[faces[i]] = static_cast<int>(i);
  const auto& nbrs = mesh_.face_neighbors();
  auto farthest = [&](std::size_t start) {
    std::vector<int> dist(faces.size(), -1);
    std::deque<std::size_t> q{start};
    dist[start] = 0;
    std::size_t last = start;
    while (!q.empty()) {
      const std::size_t i = q.front();
      q.pop_front();
      last = i;
      for (std::uint32_t g : nbrs[faces[i]]) {
        const int j = local[g];
        if (j < 0 || dist[j] >= 0) continue;
        dist[j] = dist[i] + 1;
        q.push_back(static_cast<std::size_t>(j));
      }
    }
    return last;
  };
  const std::size_t s1 = farthest(0);
  std::size_t s2 = farthest(s1);
  if (s2 == s1) s2 = s1 == 0 ? 1 : 0;

  std::vector<int> owner(faces.size(), -1);
  std::deque<std::size_t> front[2];
  std::size_t count[2] = {1, 1};
  owner[s1] = 0;
  owner[s2] = 1;
  front[0].push_back(s1);
  front[1].push_back(s2);
  auto grow = [&](int r) {
    while (!front[r].empty()) {
      const std::size_t i = front[r].front();
      for (std::uint32_t g : nbrs[faces[i]]) {
        const int j = local[g];
        if (j >= 0 && owner[j] < 0) {
          owner[j] = r;
          ++count[r];
          front[r].push_back(static_cast<std::size_t>(j));
          return true;
        }
      }
      front[r].pop_front();
    }
    return false;
  };
  while (true) {
    const int r = count[0] <= count[1] ? 0 : 1;
    if (grow(r)) continue;
    if (!grow(1 - r)) break;
  }
  Ids a, b;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    // pieces unreachable from either seed go to the smaller side
    if (owner[i] < 0) {
      owner[i] = count[0] <= count[1] ? 0 : 1;
      ++count[owner[i]];
    }
    (owner[i] == 0 ? a : b).push_back(faces[i]);
  }
  return {a, b};
}

std::pair<Ids, Ids> Splitter::split_faces(const Ids& faces) const {
  if (faces.size() < 2) fail(ErrorKind::Indivisible, "component has a single face");
  const std::size_t n = faces.size();
  const std::size_t k = k_;
  auto feat = [&](std::size_t i) { return face_features_.data() + faces[i] * k; };
  bool identical = true;
  for (std::size_t i = 1; i < n && identical; ++i) {
    identical = 1.0 - simd::dot(feat(0), feat(i), k) < 1e-12;
  }
  if (identical) return balanced_bfs(faces);

  // Average-linkage agglomeration on cosine distance restricted to adjacent
  // clusters. With unit rows the mean pairwise cosine is S_A.S_B / (|A||B|).
  std::vector<int> local(mesh_.num_faces(), -1);
  for (std::size_t i = 0; i < n; ++i) local[faces[i]] = static_cast<int>(i);
  std::vector<double> sums(n * k);
  std::vector<double> size(n, 1.0);
  std::vector<std::uint32_t> version(n, 0);
  std::vector<std::vector<std::uint32_t>> adj(n);
  std::vector<std::uint32_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(feat(i), k, sums.data() + i * k);
    parent[i] = static_cast<std::uint32_t>(i);
    for (std::uint32_t g : mesh_.face_neighbors()[faces[i]]) {
      const int j = local[g];
      if (j >= 0 && static_cast<std::size_t>(j) != i) adj[i].push_back(static_cast<std::uint32_t>(j));
    }
    std::sort(adj[i].begin(), adj[i].end());
    adj[i].erase(std::unique(adj[i].begin(), adj[i].end()), adj[i].end());
  }
  auto distance = [&](std::uint32_t a, std::uint32_t b) {
    return 1.0 - simd::dot(sums.data() + a * k, sums.data() + b * k, k) / (size[a] * size[b]);
  };
  using Entry = std::tuple<double, std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j : adj[i]) {
      if (i < j) heap.emplace(distance(i, j), i, j, 0u, 0u);
    }
  }
  std::vector<char> alive(n, 1);
  std::size_t clusters = n;
  auto merge = [&](std::uint32_t a, std::uint32_t b) {
    simd::axpy(1.0, sums.data() + b * k, sums.data() + a * k, k);
    size[a] += size[b];
    alive[b] = 0;
    parent[b] = a;
    ++version[a];
    ++version[b];
    --clusters;
    std::vector<std::uint32_t> merged;
    std::set_union(adj[a].begin(), adj[a].end(), adj[b].begin(), adj[b].end(),
                   std::back_inserter(merged));
    merged.erase(std::remove_if(merged.begin(), merged.end(),
                                [&](std::uint32_t c) { return c == a || c == b; }),
                 merged.end());
    for (std::uint32_t c : merged) {
      auto& lst = adj[c];
      lst.erase(std::remove(lst.begin(), lst.end(), b), lst.end());
      const auto pos = std::lower_bound(lst.begin(), lst.end(), a);
      if (pos == lst.end() || *pos != a) lst.insert(pos, a);
    }
    adj[a] = std::move(merged);
    adj[b].clear();
    for (std::uint32_t c : adj[a]) {
      const std::uint32_t lo = std::min(a, c), hi = std::max(a, c);
      heap.emplace(distance(lo, hi), lo, hi, version[lo], version[hi]);
    }
  };
  while (clusters > 2 && !heap.empty()) {
    const auto [d, a, b, va, vb] = heap.top();
    heap.pop();
    if (!alive[a] || !alive[b] || va != version[a] || vb != version[b]) continue;
    merge(a, b);
  }
  // disconnected pieces: finish without the adjacency constraint
  while (clusters > 2) {
    std::vector<std::uint32_t> live;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (alive[i]) live.push_back(i);
    }
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t ba = 0, bb = 0;
    for (std::size_t x = 0; x < live.size(); ++x) {
      for (std::size_t y = x + 1; y < live.size(); ++y) {
        const double d = distance(live[x], live[y]);
        if (d < best) {
          best = d;
          ba = live[x];
          bb = live[y];
        }
      }
    }
    merge(ba, bb);
  }
  auto root = [&](std::uint32_t i) {
    while (parent[i] != i) i = parent[i];
    return i;
  };
  const std::uint32_t first = root(0);
  Ids a, b;
  for (std::uint32_t i = 0; i < n; ++i) (root(i) == first ? a : b).push_back(faces[i]);
  return {a, b};
}

std::pair<Ids, Ids> Splitter::split_points(const Ids& ids, Rng& rng) const {
  const std::size_t n = ids.size();
  if (n < 2) fail(ErrorKind::Indivisible, "component has a single sample");
  if (n == 2) return {{ids[0]}, {ids[1]}};
  const std::size_t k = k_;
  Aabb box;
  for (std::uint32_t i : ids) box.extend(samples_[i].position);
  const double diag = box.diagonal();
  const double w = blend_weight_;
  bool identical = diag == 0.0;
  for (std::size_t i = 1; i < n && identical; ++i) {
    identical = 1.0 - simd::dot(fs_.row(ids[0]), fs_.row(ids[i]), k) < 1e-12;
  }
  if (identical) fail(ErrorKind::Indivisible, "all samples coincide in features and position");
  const double inv_d = diag > 0.0 ? 1.0 / diag : 0.0;

  struct Center {
    std::vector<double> f;
    Vec3 p;
  };
  auto dist = [&](std::uint32_t i, const Center& c) {
    const double cs = simd::dot(fs_.row(i), c.f.data(), k);
    return (1.0 - w) * (1.0 - cs) * 0.5 + w * (samples_[i].position - c.p).norm() * inv_d;
  };
  auto center_of = [&](std::uint32_t i) {
    return Center{std::vector<double>(fs_.row(i), fs_.row(i) + k), samples_[i].position};
  };
  Center c[2];
  c[0] = center_of(ids[uniform_index(rng, n)]);
  {
    double far = -1.0;
    std::uint32_t pick = ids[0];
    for (std::uint32_t i : ids) {
      const double d = dist(i, c[0]);
      if (d > far) {
        far = d;
        pick = i;
      }
    }
    c[1] = center_of(pick);
  }
  std::vector<int> label(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    std::size_t count[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      const int l = dist(ids[i], c[0]) <= dist(ids[i], c[1]) ? 0 : 1;
      changed |= l != label[i];
      label[i] = l;
      ++count[l];
    }
    for (int e = 0; e < 2; ++e) {
      if (count[e] != 0) continue;
      // steal the point farthest from the other center
      double far = -1.0;
      std::size_t pick = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = dist(ids[i], c[1 - e]);
        if (d > far) {
          far = d;
          pick = i;
        }
      }
      label[pick] = e;
      ++count[e];
      --count[1 - e];
      changed = true;
    }
    if (!changed) break;
    for (int e = 0; e < 2; ++e) {
      c[e].f.assign(k, 0.0);
      c[e].p.setZero();
    }
    for (std::size_t i = 0; i < n; ++i) {
      simd::axpy(1.0, fs_.row(ids[i]), c[label[i]].f.data(), k);
      c[label[i]].p += samples_[ids[i]].position;
    }
    for (int e = 0; e < 2; ++e) {
      normalize_in_place(c[e].f.data(), k);
      c[e].p /= static_cast<double>(count[e]);
    }
  }
  Ids a, b;
  for (std::size_t i = 0; i < n; ++i) (label[i] == 0 ? a : b).push_back(ids[i]);
  return {a, b};
}

std::pair<Component, Component> Splitter::split(const Component& c, Rng& rng) const {
  Component a, b;
  if (mode_ == ClusterMode::Mesh) {
    auto [fa, fb] = split_faces(c.face_ids);
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    for (auto* part : {&a, &b}) {
      part->face_ids = part == &a ? fa : fb;
      for (std::uint32_t f : part->face_ids) {
        part->sample_ids.insert(part->sample_ids.end(), face_samples_[f].begin(),
                                face_samples_[f].end());
      }
      std::sort(part->sample_ids.begin(), part->sample_ids.end());
    }
  } else {
    auto [sa, sb] = split_points(c.sample_ids, rng);
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    a.sample_ids = std::move(sa);
    b.sample_ids = std::move(sb);
  }
  for (auto* part : {&a, &b}) {
    part->parent = c.id;
    part->generation = c.generation + 1;
  }
  return {std::move(a), std::move(b)};
}

std::pair<Component, Component> binary_split(const SolidMesh& mesh,
                                             const std::vector<SurfaceSample>& samples,
                                             const FeatureSet& fs, const Component& c,
                                             ClusterMode mode, double blend_weight, Rng& rng) {
  return Splitter(mesh, samples, fs, mode, blend_weight).split(c, rng);
}

Component root_component(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                         ClusterMode mode) {
  Component c;
  c.sample_ids.resize(samples.size());
  for (std::uint32_t i = 0; i < samples.size(); ++i) c.sample_ids[i] = i;
  if (mode == ClusterMode::Mesh) {
    c.face_ids.resize(mesh.num_faces());
    for (std::uint32_t f = 0; f < mesh.num_faces(); ++f) c.face_ids[f] = f;
  }
  return c;
}

ConvexHull component_hull(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                          const Component& c, ClusterMode mode) {
  std::vector<Vec3> pts;
  if (mode == ClusterMode::Mesh) {
    std::vector<std::uint32_t> verts;
    for (std::uint32_t f : c.face_ids) {
      for (std::uint32_t v : mesh.faces()[f]) verts.push_back(v);
    }
    std::sort(verts.begin(), verts.end());
    verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
    for (std::uint32_t v : verts) pts.push_back(mesh.vertices()[v]);
  } else {
    for (std::uint32_t i : c.sample_ids) pts.push_back(samples[i].position);
  }
  if (pts.empty()) fail(ErrorKind::DegenerateHull, "component has no geometry");
  return convex_hull_inflated(pts);
}

namespace {

void score(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples, Component& c,
           const DecomposeConfig& cfg, ScoreCache* cache) {
  const Ids& key = cfg.mode == ClusterMode::Mesh ? c.face_ids : c.sample_ids;
  if (cache) {
    const auto it = cache->entries.find(key);
    if (it != cache->entries.end()) {
      c.hull = it->second.first;
      c.concavity = it->second.second;
      return;
    }
  }
  c.hull = component_hull(mesh, samples, c, cfg.mode);
  // one sample stream for every component: equal hulls score equally
  c.concavity = concavity(mesh, c.hull, cfg.n_metric_samples, derive_seed(cfg.seed, 0xc0ca),
                          cfg.metric);
  if (cache) cache->entries.emplace(key, std::make_pair(c.hull, c.concavity));
}

} // namespace

Decomposition recursive_decompose(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                                  const FeatureSet& fs, const DecomposeConfig& cfg,
                                  ScoreCache* cache) {
  if (!(cfg.epsilon > 0.0)) fail(ErrorKind::InvalidArgument, "epsilon must be positive");
  if (cfg.max_hulls < 1) fail(ErrorKind::InvalidArgument, "max_hulls must be at least 1");
  if (samples.empty()) fail(ErrorKind::InvalidArgument, "no samples");
  const Splitter splitter(mesh, samples, fs, cfg.mode, cfg.blend_weight);
  Rng rng = make_rng(cfg.seed, 0xd1c0);
  constexpr double kProgress = 0.99;
  constexpr int kMaxStall = 3;

  Decomposition d;
  d.epsilon = cfg.epsilon;
  d.max_hulls = cfg.max_hulls;
  // max-heap on concavity; ties pop the older component first
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry> heap;
  auto push = [&](Component c) {
    c.id = static_cast<int>(d.nodes.size());
    score(mesh, samples, c, cfg, cache);
    d.trace.push_back({TraceEvent::Push, c.id, c.concavity.value});
    heap.emplace(c.concavity.value, -c.id);
    d.nodes.push_back(std::move(c));
  };
  auto accept = [&](int id, LeafFlag flag) {
    d.nodes[id].is_leaf = true;
    d.nodes[id].flag = flag;
    d.leaves.push_back(id);
  };
  push(root_component(mesh, samples, cfg.mode));

  while (!heap.empty() && d.leaves.size() < cfg.max_hulls) {
    const int id = -heap.top().second;
    heap.pop();
    const Component& p = d.nodes[id];
    d.trace.push_back({TraceEvent::Pop, id, p.concavity.value});
    if (p.concavity.value < cfg.epsilon) {
      accept(id, LeafFlag::None);
      continue;
    }
    if (p.stall >= kMaxStall) {
      accept(id, LeafFlag::NoProgress);
      continue;
    }
    // a split turns one pending piece into two
    if (d.leaves.size() + heap.size() + 2 > cfg.max_hulls) {
      accept(id, LeafFlag::CapReached);
      continue;
    }
    std::pair<Component, Component> kids;
    try {
      kids = splitter.split(p, rng);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Indivisible) throw;
      accept(id, LeafFlag::Indivisible);
      continue;
    }
    const double parent_value = p.concavity.value;
    const int parent_stall = p.stall;
    const int a = static_cast<int>(d.nodes.size());
    push(std::move(kids.first));
    push(std::move(kids.second));
    const double worst = std::max(d.nodes[a].concavity.value, d.nodes[a + 1].concavity.value);
    const int stall = worst > kProgress * parent_value ? parent_stall + 1 : 0;
    d.nodes[a].stall = d.nodes[a + 1].stall = stall;
    d.nodes[id].children = {a, a + 1};
  }
  while (!heap.empty()) {
    const int id = -heap.top().second;
    heap.pop();
    accept(id, LeafFlag::Flushed);
  }
  return d;
}

std::vector<Decomposition> granularity_sweep(const SolidMesh& mesh,
                                             const std::vector<SurfaceSample>& samples,
                                             const FeatureSet& fs,
                                             const std::vector<double>& epsilons,
                                             const DecomposeConfig& cfg,
                                             std::vector<SweepRow>* table) {
  if (epsilons.empty()) fail(ErrorKind::InvalidArgument, "no epsilon values");
  if (!std::is_sorted(epsilons.begin(), epsilons.end(), std::greater<double>())) {
    fail(ErrorKind::InvalidArgument, "epsilons must be sorted in descending order");
  }
  ScoreCache cache;
  std::vector<Decomposition> out;
  if (table) table->clear();
  for (double eps : epsilons) {
    DecomposeConfig c = cfg;
    c.epsilon = eps;
    out.push_back(recursive_decompose(mesh, samples, fs, c, &cache));
    if (table) {
      const Decomposition& d = out.back();
      table->push_back({eps, d.leaves.size(), d.max_concavity(),
                        reconstruction_error(mesh, d.leaf_hulls(), cfg.n_metric_samples, cfg.seed)});
    }
  }
  return out;
}

void write_tree_dot(const std::filesystem::path& path, const Decomposition& d) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "digraph decomposition {\n  node [fontname=\"Helvetica\"];\n";
  char buf[64];
  for (const Component& c : d.nodes) {
    std::snprintf(buf, sizeof buf, "%.4f", c.concavity.value);
    out << "  n" << c.id << " [label=\"" << c.id << "\\nc=" << buf;
    if (c.is_leaf && c.flag != LeafFlag::None) out << "\\n" << to_string(c.flag);
    out << "\"" << (c.is_leaf ? ", shape=box" : "") << "];\n";
  }
  for (const Component& c : d.nodes) {
    for (int child : c.children) out << "  n" << c.id << " -> n" << child << ";\n";
  }
  out << "}\n";
}

} // namespace convfield
