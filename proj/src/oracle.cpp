#include "convfield/oracle.hpp"

#include "convfield/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace convfield {

double segment_epsilon(const SolidMesh& mesh) {
  return 1e-4 * mesh.diagonal();
}

bool is_convex_pair(const SolidMesh& mesh, const Vec3& a_in, const Vec3& b_in) {
  // canonical endpoint order makes the floating-point path independent of
  // argument order
  const bool swap = std::lexicographical_compare(b_in.data(), b_in.data() + 3, a_in.data(),
                                                 a_in.data() + 3);
  const Vec3& a = swap ? b_in : a_in;
  const Vec3& b = swap ? a_in : b_in;
  const double eps = segment_epsilon(mesh);
  const Vec3 d = b - a;
  const double len = d.norm();
  if (len <= 2.0 * eps) return true;
  const Vec3 dir = d / len;
  const bool blocked = ray_blocked(mesh, a, dir, eps, len - eps);
  const Vec3 mid = 0.5 * (a + b);
  const ClosestPoint c = closest_point(mesh, mid);
  // is_inside is not reliable this close to the surface, so it is only asked
  // about midpoints clear of it
  if (c.distance > eps) return !blocked && is_inside(mesh, mid);
  // The midpoint is on the surface. A segment lying in a face plane grazes
  // that face and its coplanar neighbours, where ray hits are unreliable both
  // ways, so the test is repeated on a copy pushed eps into the solid.
  const Vec3& n = mesh.face_normals()[c.face_id];
  if (std::abs(dir.dot(n)) > 1e-9) return !blocked;
  return !ray_blocked(mesh, a - eps * n, dir, eps, len - eps);
}

std::optional<SurfaceSample> sample_positive(const SolidMesh& mesh, const SurfaceSample& anchor,
                                             int tries, Rng& rng) {
  const double t_min = default_ray_epsilon(mesh);
  for (int attempt = 0; attempt < tries; ++attempt) {
    Vec3 dir = random_unit_vector(rng);
    const double side = dir.dot(anchor.normal);
    if (side == 0.0) continue;
    if (side > 0.0) dir = -dir;
    const auto hit = cast_ray(mesh, anchor.position, dir, t_min,
                              std::numeric_limits<double>::infinity());
    if (!hit || hit->t < 1e-3) continue;
    if (!is_convex_pair(mesh, anchor.position, hit->position)) continue;
    return SurfaceSample{hit->position, hit->normal, hit->face_id};
  }
  return std::nullopt;
}

double negative_weight(const Vec3& anchor, const Vec3& candidate, double d_min) {
  const double d = std::max((candidate - anchor).norm(), d_min);
  return 1.0 / (d * d);
}

WeightedSampler::WeightedSampler(const std::vector<double>& weights) {
  cumulative_.resize(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += std::max(weights[i], 0.0);
    cumulative_[i] = acc;
  }
  if (!(acc > 0.0)) fail(ErrorKind::InvalidArgument, "weights must have a positive sum");
}

std::uint32_t WeightedSampler::draw(Rng& rng) const {
  const double r = uniform01(rng) * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), r);
  return static_cast<std::uint32_t>(
      std::min<std::ptrdiff_t>(it - cumulative_.begin(), static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
}

std::vector<std::uint32_t> weighted_choice_without_replacement(const std::vector<double>& weights,
                                                               std::size_t count, Rng& rng) {
  std::vector<std::pair<double, std::uint32_t>> keys(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double u = 1.0 - uniform01(rng);  // (0, 1]
    keys[i] = {weights[i] > 0.0 ? std::log(u) / weights[i] : -std::numeric_limits<double>::infinity(),
               static_cast<std::uint32_t>(i)};
  }
  count = std::min(count, keys.size());
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end(),
                    [](const auto& x, const auto& y) {
                      return x.first > y.first || (x.first == y.first && x.second < y.second);
                    });
  std::vector<std::uint32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = keys[i].second;
  return out;
}

std::vector<SurfaceSample> sample_negatives(const SolidMesh& mesh, const SurfaceSample& anchor,
                                            const std::vector<SurfaceSample>& pool,
                                            std::size_t count, Rng& rng) {
  if (pool.empty()) fail(ErrorKind::InvalidArgument, "empty negative pool");
  std::vector<double> w(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) w[i] = negative_weight(anchor.position, pool[i].position);
  const WeightedSampler sampler(w);
  std::vector<char> tried(pool.size(), 0);
  std::vector<SurfaceSample> out;
  const std::size_t budget = 4 * pool.size();
  for (std::size_t draw = 0; draw < budget && out.size() < count; ++draw) {
    const std::uint32_t i = sampler.draw(rng);
    if (tried[i]) continue;
    tried[i] = 1;
    if (pool[i].position == anchor.position) continue;
    if (!is_convex_pair(mesh, anchor.position, pool[i].position)) out.push_back(pool[i]);
  }
  return out;
}

namespace {

struct AnchorResult {
  std::vector<SurfaceSample> positives;       // chosen positives, one per triplet
  std::vector<std::vector<std::uint32_t>> negatives;
};

AnchorResult process_anchor(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                            std::uint32_t anchor, const TripletConfig& cfg, std::uint64_t seed,
                            std::vector<std::uint32_t>& perm) {
  AnchorResult r;
  Rng rng = make_rng(seed, 0x7a1c0000ULL + anchor);
  const SurfaceSample& x = samples[anchor];

  std::vector<SurfaceSample> positives;
  for (std::size_t i = 0; i < cfg.n_pos_per_anchor; ++i) {
    if (auto p = sample_positive(mesh, x, cfg.positive_tries, rng)) positives.push_back(*p);
  }
  if (positives.empty()) return r;

  // valid negatives: walk the samples in random order, keep nonconvex ones
  std::vector<std::uint32_t> candidates;
  const auto n = static_cast<std::uint32_t>(samples.size());
  std::iota(perm.begin(), perm.end(), 0u);
  const std::size_t budget = std::min<std::size_t>(n, cfg.candidate_scan_factor * cfg.n_neg_candidates);
  for (std::uint32_t k = 0; k < budget && candidates.size() < cfg.n_neg_candidates; ++k) {
    const auto j = k + static_cast<std::uint32_t>(uniform_index(rng, n - k));
    std::swap(perm[k], perm[j]);
    const std::uint32_t c = perm[k];
    if (c == anchor || samples[c].position == x.position) continue;
    if (!is_convex_pair(mesh, x.position, samples[c].position)) candidates.push_back(c);
  }
  if (candidates.empty()) return r;

  for (std::size_t t = 0; t < cfg.triplets_per_anchor; ++t) {
    const std::size_t take = std::min(cfg.n_neg_per_triplet, candidates.size());
    const auto n_hard = static_cast<std::size_t>(std::llround(cfg.hard_fraction * static_cast<double>(take)));
    std::vector<double> w(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      w[i] = negative_weight(x.position, samples[candidates[i]].position);
    }
    std::vector<std::uint32_t> chosen = weighted_choice_without_replacement(w, n_hard, rng);
    std::vector<char> used(candidates.size(), 0);
    for (std::uint32_t c : chosen) used[c] = 1;
    std::vector<std::uint32_t> rest;
    for (std::uint32_t i = 0; i < candidates.size(); ++i) {
      if (!used[i]) rest.push_back(i);
    }
    for (std::size_t i = 0; i < take - chosen.size() && !rest.empty(); ++i) {
      const auto j = i + uniform_index(rng, rest.size() - i);
      std::swap(rest[i], rest[j]);
      chosen.push_back(rest[i]);
    }
    std::vector<std::uint32_t> negs;
    negs.reserve(chosen.size());
    for (std::uint32_t c : chosen) negs.push_back(candidates[c]);
    r.positives.push_back(positives[uniform_index(rng, positives.size())]);
    r.negatives.push_back(std::move(negs));
  }
  return r;
}

} // namespace

TripletSet build_triplets(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                          const TripletConfig& cfg, std::uint64_t seed) {
  if (samples.size() < 2) fail(ErrorKind::InvalidArgument, "need at least 2 samples");
  if (cfg.n_anchors == 0 || cfg.n_neg_per_triplet == 0 || cfg.triplets_per_anchor == 0) {
    fail(ErrorKind::InvalidArgument, "triplet counts must be positive");
  }
  const std::size_t n_anchors = std::min(cfg.n_anchors, samples.size());
  std::vector<AnchorResult> results(n_anchors);
  const auto total = static_cast<std::int64_t>(n_anchors);
#pragma omp parallel
  {
    std::vector<std::uint32_t> perm(samples.size());
#pragma omp for schedule(dynamic, 4)
    for (std::int64_t a = 0; a < total; ++a) {
      results[a] = process_anchor(mesh, samples, static_cast<std::uint32_t>(a), cfg, seed, perm);
    }
  }

  TripletSet set;
  set.points = samples;
  set.n_surface = samples.size();
  set.anchors_tried = n_anchors;
  for (std::size_t a = 0; a < n_anchors; ++a) {
    if (results[a].positives.empty()) continue;
    ++set.anchors_used;
    for (std::size_t t = 0; t < results[a].positives.size(); ++t) {
      Triplet tr;
      tr.anchor = static_cast<std::uint32_t>(a);
      tr.positive = static_cast<std::uint32_t>(set.points.size());
      set.points.push_back(results[a].positives[t]);
      tr.negatives = std::move(results[a].negatives[t]);
      set.triplets.push_back(std::move(tr));
    }
  }
  if (set.anchors_used * 10 < n_anchors) {
    fail(ErrorKind::OracleStarvation, "only " + std::to_string(set.anchors_used) + " of " +
                                          std::to_string(n_anchors) + " anchors produced a triplet");
  }
  return set;
}

namespace {

constexpr char kTripletMagic[8] = {'C', 'V', 'F', 'T', 'R', 'I', 'P', '\0'};
constexpr std::uint32_t kTripletVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorKind::Parse, "triplet file truncated");
  return v;
}

void put_sample(std::ostream& out, const SurfaceSample& s) {
  for (int i = 0; i < 3; ++i) put(out, static_cast<float>(s.position[i]));
  for (int i = 0; i < 3; ++i) put(out, static_cast<float>(s.normal[i]));
}

SurfaceSample get_sample(std::istream& in) {
  SurfaceSample s;
  for (int i = 0; i < 3; ++i) s.position[i] = get<float>(in);
  for (int i = 0; i < 3; ++i) s.normal[i] = get<float>(in);
  s.face_id = 0;
  return s;
}

} // namespace

void write_triplets(const std::filesystem::path& path, const TripletSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(kTripletMagic, sizeof(kTripletMagic));
  put(out, kTripletVersion);
  put(out, static_cast<std::uint32_t>(set.triplets.size()));
  for (const Triplet& t : set.triplets) {
    put_sample(out, set.points[t.anchor]);
    put_sample(out, set.points[t.positive]);
    put(out, static_cast<std::uint32_t>(t.negatives.size()));
    for (std::uint32_t n : t.negatives) put_sample(out, set.points[n]);
  }
}

std::vector<TripletRecord> read_triplets(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Parse, "cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kTripletMagic, sizeof(magic)) != 0) {
    fail(ErrorKind::Parse, "not a triplet file");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kTripletVersion) fail(ErrorKind::Parse, "unsupported triplet file version");
  const auto count = get<std::uint32_t>(in);
  std::vector<TripletRecord> out(count);
  for (auto& r : out) {
    r.anchor = get_sample(in);
    r.positive = get_sample(in);
    const auto nn = get<std::uint32_t>(in);
    r.negatives.reserve(nn);
    for (std::uint32_t i = 0; i < nn; ++i) r.negatives.push_back(get_sample(in));
  }
  return out;
}

} // namespace convfield
