#include "convfield/features.hpp"

#include "convfield/error.hpp"
#include "convfield/point_index.hpp"
#include "convfield/simd/kernels.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

namespace convfield {

double FeatureSet::dot(std::size_t i, std::size_t j) const {
  return simd::dot(row(i), row(j), k);
}

double similarity(const double* u, const double* v, std::size_t k, double tau) {
  return std::exp(simd::dot(u, v, k) / tau);
}

namespace {

// Turns logits into softmax weights in place (with one extra logit whose
// weight is returned) and gives back the log-sum-exp.
double softmax_in_place(double* s, std::size_t n, double extra, double& extra_weight) {
  double m = extra;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, s[i]);
  double acc = std::exp(extra - m);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = std::exp(s[i] - m);
    acc += s[i];
  }
  const double inv = 1.0 / acc;
  for (std::size_t i = 0; i < n; ++i) s[i] *= inv;
  extra_weight = std::exp(extra - m) * inv;
  return m + std::log(acc);
}

// Forward pass of one triplet. In contrastive mode w_x / w_p end up holding
// the softmax weight of each negative, which is what the gradient needs.
struct TripletTerms {
  double loss = 0.0;
  double a0 = 0.0;  // softmax weight of the positive, anchor side
  double b0 = 0.0;  // same, positive side
  std::vector<double> w_x;
  std::vector<double> w_p;
};

void forward(const FeatureSet& fs, const Triplet& t, LossMode mode, TripletTerms& out) {
  const std::size_t m = t.negatives.size();
  out.w_x.resize(m);
  out.w_p.resize(m);
  const double* fx = fs.row(t.anchor);
  const double* fp = fs.row(t.positive);
  const double xp = simd::dot(fx, fp, fs.k);
  if (mode == LossMode::Plain) {
    simd::gather_dot(fx, fs.data.data(), fs.k, t.negatives.data(), m, fs.k, out.w_x.data());
    double mean_n = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean_n += out.w_x[j];
    mean_n = m > 0 ? mean_n / static_cast<double>(m) : 0.0;
    out.loss = 0.5 * (-xp + mean_n);
    return;
  }
  simd::gather_dot2(fx, fp, fs.data.data(), fs.k, t.negatives.data(), m, fs.k, out.w_x.data(),
                    out.w_p.data());
  const double inv_tau = 1.0 / fs.tau;
  for (std::size_t j = 0; j < m; ++j) {
    out.w_x[j] *= inv_tau;
    out.w_p[j] *= inv_tau;
  }
  const double s_xp = xp * inv_tau;
  const double lse_x = softmax_in_place(out.w_x.data(), m, s_xp, out.a0);
  const double lse_p = softmax_in_place(out.w_p.data(), m, s_xp, out.b0);
  out.loss = 0.5 * ((lse_x - s_xp) + (lse_p - s_xp));
}

} // namespace

double contrastive_loss(const FeatureSet& fs, const Triplet& t) {
  TripletTerms terms;
  forward(fs, t, LossMode::Contrastive, terms);
  return terms.loss;
}

double plain_loss(const FeatureSet& fs, const Triplet& t) {
  TripletTerms terms;
  forward(fs, t, LossMode::Plain, terms);
  return terms.loss;
}

double triplet_loss(const FeatureSet& fs, const Triplet& t, LossMode mode) {
  return mode == LossMode::Plain ? plain_loss(fs, t) : contrastive_loss(fs, t);
}

LossReport loss_gradient(const FeatureSet& fs, const std::vector<Triplet>& triplets,
                         const std::vector<std::uint32_t>& batch, LossMode mode,
                         std::vector<double>& grad, std::vector<std::uint32_t>* touched) {
  if (batch.empty()) fail(ErrorKind::InvalidArgument, "empty batch");
  const std::size_t k = fs.k;
  grad.assign(fs.n * k, 0.0);
  const auto nb = static_cast<std::int64_t>(batch.size());
  std::vector<TripletTerms> terms(batch.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nb; ++b) {
    forward(fs, triplets[batch[b]], mode, terms[b]);
  }

  LossReport report;
  report.per_triplet.resize(batch.size());
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<char> hit(fs.n, 0);
  auto mark = [&](std::uint32_t r) { hit[r] = 1; };
  double total = 0.0;
  std::vector<double> acc_x(k), acc_p(k);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Triplet& t = triplets[batch[b]];
    const TripletTerms& tt = terms[b];
    report.per_triplet[b] = tt.loss;
    total += tt.loss;
    const std::size_t m = t.negatives.size();
    const double* fx = fs.row(t.anchor);
    const double* fp = fs.row(t.positive);
    std::fill(acc_x.begin(), acc_x.end(), 0.0);
    std::fill(acc_p.begin(), acc_p.end(), 0.0);
    if (mode == LossMode::Plain) {
      const double cn = m > 0 ? 0.5 * scale / static_cast<double>(m) : 0.0;
      simd::axpy(-0.5 * scale, fp, acc_x.data(), k);
      simd::axpy(-0.5 * scale, fx, acc_p.data(), k);
      for (std::uint32_t n : t.negatives) {
        simd::axpy(cn, fs.row(n), acc_x.data(), k);
        simd::axpy(cn, fx, grad.data() + n * k, k);
        mark(n);
      }
    } else {
      // d/ds of each log-sum-exp is its softmax
      const double c = 0.5 * scale / fs.tau;
      simd::axpy(c * (tt.a0 + tt.b0 - 2.0), fp, acc_x.data(), k);
      simd::axpy(c * (tt.a0 + tt.b0 - 2.0), fx, acc_p.data(), k);
      constexpr std::size_t kAhead = 8;
      for (std::size_t j = 0; j < m; ++j) {
        if (j + kAhead < m) {
          const std::size_t ahead = t.negatives[j + kAhead] * k;
          for (std::size_t off = 0; off < k; off += 8) {
            __builtin_prefetch(fs.data.data() + ahead + off);
            __builtin_prefetch(grad.data() + ahead + off, 1);
          }
        }
        const std::uint32_t n = t.negatives[j];
        const double ca = c * tt.w_x[j];
        const double cb = c * tt.w_p[j];
        simd::dual_axpy(fs.row(n), ca, acc_x.data(), cb, acc_p.data(), k);
        simd::axpy2(ca, fx, cb, fp, grad.data() + n * k, k);
        mark(n);
      }
    }
    simd::axpy(1.0, acc_x.data(), grad.data() + t.anchor * k, k);
    simd::axpy(1.0, acc_p.data(), grad.data() + t.positive * k, k);
    mark(t.anchor);
    mark(t.positive);
  }
  report.total = total * scale;

  double norm2 = 0.0;
  std::vector<std::uint32_t> rows;
  for (std::uint32_t r = 0; r < fs.n; ++r) {
    if (!hit[r]) continue;
    rows.push_back(r);
    double* g = grad.data() + r * k;
    const double* f = fs.row(r);
    simd::axpy(-simd::dot(g, f, k), f, g, k);
    norm2 += simd::dot(g, g, k);
  }
  report.grad_norm = std::sqrt(norm2);
  if (touched) *touched = std::move(rows);
  return report;
}

void normalize_rows(FeatureSet& fs) {
  for (std::size_t i = 0; i < fs.n; ++i) {
    double* r = fs.row(i);
    const double len = std::sqrt(simd::dot(r, r, fs.k));
    if (len > 0.0) {
      for (std::size_t j = 0; j < fs.k; ++j) r[j] /= len;
    } else {
      r[0] = 1.0;
    }
  }
}

FeatureSet random_features(std::size_t n, std::size_t k, double tau, Rng& rng) {
  FeatureSet fs;
  fs.n = n;
  fs.k = k;
  fs.tau = tau;
  fs.data.resize(n * k);
  for (double& v : fs.data) v = standard_normal(rng);
  normalize_rows(fs);
  return fs;
}

Triplane Triplane::covering(const Aabb& box, int resolution) {
  if (resolution < 1) fail(ErrorKind::InvalidArgument, "field resolution must be >= 1");
  Triplane t;
  t.resolution = resolution;
  // one spare cell around the box
  const double side = box.extent().maxCoeff();
  t.spacing = side / std::max(resolution - 2, 1);
  if (!(t.spacing > 0.0)) t.spacing = 1.0;
  t.origin = box.center() - 0.5 * resolution * t.spacing * Vec3::Ones();
  return t;
}

std::size_t Triplane::nodes_per_plane() const {
  const auto n = static_cast<std::size_t>(resolution + 1);
  return n * n;
}

std::size_t Triplane::num_nodes() const {
  return 3 * nodes_per_plane();
}

void Triplane::stencil(const Vec3& p, Ids& ids, Weights& w) const {
  static constexpr int kAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  int cell[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double u = std::clamp((p[a] - origin[a]) / spacing, 0.0, static_cast<double>(resolution));
    cell[a] = std::min(static_cast<int>(u), resolution - 1);
    frac[a] = u - cell[a];
  }
  const auto n = static_cast<std::uint32_t>(resolution + 1);
  const auto per_plane = static_cast<std::uint32_t>(nodes_per_plane());
  for (int pl = 0; pl < 3; ++pl) {
    const int u = kAxes[pl][0], v = kAxes[pl][1];
    for (int c = 0; c < 4; ++c) {
      const int du = c & 1, dv = (c >> 1) & 1;
      ids[pl * 4 + c] = pl * per_plane + static_cast<std::uint32_t>(cell[v] + dv) * n +
                        static_cast<std::uint32_t>(cell[u] + du);
      w[pl * 4 + c] = (du ? frac[u] : 1.0 - frac[u]) * (dv ? frac[v] : 1.0 - frac[v]);
    }
  }
}

int Triplane::node_plane(std::uint32_t id) const {
  return static_cast<int>(id / nodes_per_plane());
}

Vec3 Triplane::node_position(std::uint32_t id) const {
  const auto n = static_cast<std::uint32_t>(resolution + 1);
  const std::uint32_t local = id % static_cast<std::uint32_t>(nodes_per_plane());
  return Vec3(spacing * (local % n), spacing * (local / n), 0.0);
}

namespace {

// Normalized blend of the stencil nodes; returns the pre-normalization length.
double blend_row(const Triplane::Ids& ids, const Triplane::Weights& w, const double* nodes,
                 std::size_t k, double* f) {
  std::fill_n(f, k, 0.0);
  for (int c = 0; c < Triplane::kStencil; ++c) {
    if (w[c] != 0.0) simd::axpy(w[c], nodes + ids[c] * k, f, k);
  }
  double len = std::sqrt(simd::dot(f, f, k));
  if (!(len > 1e-12)) {
    // the lookups cancel; fall back to the heaviest node
    const auto c = std::max_element(w.begin(), w.end()) - w.begin();
    std::copy_n(nodes + ids[c] * k, k, f);
    len = 1.0;
  }
  const double inv = 1.0 / len;
  for (std::size_t j = 0; j < k; ++j) f[j] *= inv;
  return len;
}

} // namespace

FeatureSet interpolate_field(const Triplane& grid, const std::vector<SurfaceSample>& points,
                             const std::vector<double>& node_features, std::size_t k, double tau,
                             std::vector<double>* norms) {
  FeatureSet fs;
  fs.n = points.size();
  fs.k = k;
  fs.tau = tau;
  fs.data.assign(fs.n * k, 0.0);
  if (norms) norms->resize(fs.n);
  Triplane::Ids ids;
  Triplane::Weights w;
  for (std::size_t r = 0; r < fs.n; ++r) {
    grid.stencil(points[r].position, ids, w);
    const double len = blend_row(ids, w, node_features.data(), k, fs.row(r));
    if (norms) (*norms)[r] = len;
  }
  return fs;
}

OptimizeResult optimize_single_shape(const SolidMesh& mesh, const TripletSet& set,
                                     const OptimizeConfig& cfg) {
  if (set.triplets.empty()) fail(ErrorKind::InvalidArgument, "no triplets to optimize");
  if (cfg.k == 0 || !(cfg.tau > 0.0) || cfg.batch_size == 0) {
    fail(ErrorKind::InvalidArgument, "k, tau and batch_size must be positive");
  }
  const std::size_t k = cfg.k;
  const Triplane grid = Triplane::covering(mesh.bounds(), cfg.field_resolution);
  const std::size_t nn = grid.num_nodes();
  Rng rng = make_rng(cfg.seed, 0xfea7);
  OptimizeResult result;
  FeatureSet nodes = random_features(nn, k, cfg.tau, rng);

  std::vector<Triplane::Ids> stencil_ids(set.points.size());
  std::vector<Triplane::Weights> stencil_w(set.points.size());
  for (std::size_t r = 0; r < set.points.size(); ++r) {
    grid.stencil(set.points[r].position, stencil_ids[r], stencil_w[r]);
  }
  std::vector<char> reached(nn, 0);
  auto reach = [&](std::uint32_t r) {
    for (std::uint32_t v : stencil_ids[r]) reached[v] = 1;
  };
  for (const Triplet& t : set.triplets) {
    reach(t.anchor);
    reach(t.positive);
    for (std::uint32_t n : t.negatives) reach(n);
  }
  std::vector<std::uint32_t> active;
  for (std::uint32_t v = 0; v < nn; ++v) {
    if (reached[v]) active.push_back(v);
  }

  std::vector<double> velocity(nn * k, 0.0);
  std::vector<double> node_grad(nn * k, 0.0);
  std::vector<double> grad;
  std::vector<double> norms(set.points.size(), 1.0);
  std::vector<std::uint32_t> stamp(set.points.size(), 0);
  std::uint32_t stamp_now = 0;
  FeatureSet rows;
  rows.n = set.points.size();
  rows.k = k;
  rows.tau = cfg.tau;
  rows.data.assign(rows.n * k, 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<std::uint32_t> order(set.triplets.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch_size = std::min(cfg.batch_size, order.size());
  std::vector<std::uint32_t> batch(batch_size);
  result.loss_trace.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double lr = cfg.learning_rate * 0.5 *
                      (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                      static_cast<double>(cfg.steps)));
    for (std::size_t i = 0; i < batch_size; ++i) {
      const auto j = i + uniform_index(rng, order.size() - i);
      std::swap(order[i], order[j]);
      batch[i] = order[i];
    }
    // only rows the batch references are refreshed; the rest are never read
    ++stamp_now;
    auto need = [&](std::uint32_t r) {
      if (stamp[r] == stamp_now) return;
      stamp[r] = stamp_now;
      norms[r] = blend_row(stencil_ids[r], stencil_w[r], nodes.data.data(), k, rows.row(r));
    };
    for (std::uint32_t b : batch) {
      const Triplet& t = set.triplets[b];
      need(t.anchor);
      need(t.positive);
      for (std::uint32_t n : t.negatives) need(n);
    }
    const LossReport rep = loss_gradient(rows, set.triplets, batch, cfg.loss_mode, grad, &touched);
    result.loss_trace.push_back(rep.total);

    // d normalize(u)/du = (I - f f^T) / |u|; loss_gradient already projected
    for (std::uint32_t v : active) std::fill_n(node_grad.data() + v * k, k, 0.0);
    for (std::uint32_t r : touched) {
      const double inv = 1.0 / norms[r];
      for (int c = 0; c < Triplane::kStencil; ++c) {
        if (stencil_w[r][c] == 0.0) continue;
        simd::axpy(stencil_w[r][c] * inv, grad.data() + r * k, node_grad.data() + stencil_ids[r][c] * k, k);
      }
    }
    for (std::uint32_t v : active) {
      double* g = node_grad.data() + v * k;
      double* f = nodes.row(v);
      double* vel = velocity.data() + v * k;
      simd::axpy(-simd::dot(g, f, k), f, g, k);
      for (std::size_t j = 0; j < k; ++j) vel[j] = cfg.momentum * vel[j] + g[j];
      simd::axpy(-lr, vel, f, k);
      const double len = std::sqrt(simd::dot(f, f, k));
      for (std::size_t j = 0; j < k; ++j) f[j] /= len;
      simd::axpy(-simd::dot(vel, f, k), f, vel, k);
    }
  }

  // nodes no triplet reaches copy the nearest reached node of their plane
  for (int pl = 0; pl < 3; ++pl) {
    std::vector<std::uint32_t> donors;
    std::vector<Vec3> pts;
    const auto first = static_cast<std::uint32_t>(pl * grid.nodes_per_plane());
    const auto last = static_cast<std::uint32_t>(first + grid.nodes_per_plane());
    for (std::uint32_t v = first; v < last; ++v) {
      if (!reached[v]) continue;
      donors.push_back(v);
      pts.push_back(grid.node_position(v));
    }
    if (donors.empty() || donors.size() == grid.nodes_per_plane()) continue;
    const PointIndex index(pts);
    for (std::uint32_t v = first; v < last; ++v) {
      if (reached[v]) continue;
      std::copy_n(nodes.row(donors[index.nearest(grid.node_position(v)).index]), k, nodes.row(v));
    }
  }
  result.features = interpolate_field(grid, set.points, nodes.data, k, cfg.tau);
  for (double& v : result.features.data) v = static_cast<double>(static_cast<float>(v));
  result.node_features = std::move(nodes.data);
  return result;
}

std::vector<std::array<double, 3>> pca_colors(const FeatureSet& fs) {
  if (fs.n < 3) fail(ErrorKind::InvalidArgument, "pca_colors needs at least 3 rows");
  const auto n = static_cast<Eigen::Index>(fs.n);
  const auto k = static_cast<Eigen::Index>(fs.k);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
      fs.data.data(), n, k);
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Eigen::MatrixXd C = X.rowwise() - mean;
  const Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(fs.n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  std::vector<std::array<double, 3>> colors(fs.n, {0.5, 0.5, 0.5});
  const double scale = std::max(1.0, std::abs(eig.eigenvalues()[k - 1]));
  for (int c = 0; c < 3 && c < k; ++c) {
    const Eigen::Index col = k - 1 - c;
    if (eig.eigenvalues()[col] <= 1e-20 * scale) continue;
    Eigen::VectorXd axis = eig.eigenvectors().col(col);
    Eigen::Index big = 0;
    axis.cwiseAbs().maxCoeff(&big);
    if (axis[big] < 0.0) axis = -axis;
    const Eigen::VectorXd proj = C * axis;
    const double lo = proj.minCoeff(), hi = proj.maxCoeff();
    if (!(hi - lo > 1e-9)) continue;
    for (std::size_t i = 0; i < fs.n; ++i) {
      colors[i][c] = (proj[static_cast<Eigen::Index>(i)] - lo) / (hi - lo);
    }
  }
  return colors;
}

void write_features(const std::filesystem::path& bin, const std::filesystem::path& sidecar,
                    const FeatureSet& fs, const FeatureSidecar& meta) {
  static_assert(std::endian::native == std::endian::little);
  {
    std::ofstream out(bin, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + bin.string());
    std::vector<float> buf(fs.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(fs.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  nlohmann::json j;
  j["k"] = fs.k;
  j["tau"] = fs.tau;
  j["n_samples"] = fs.n;
  j["n_surface"] = meta.n_surface;
  j["seed"] = meta.seed;
  j["loss_trace"] = meta.loss_trace;
  std::ofstream out(sidecar);
  if (!out) fail(ErrorKind::Io, "cannot write " + sidecar.string());
  out << j.dump(2) << '\n';
}

FeatureSet read_features(const std::filesystem::path& bin, const std::filesystem::path& sidecar,
                         FeatureSidecar* meta) {
  std::ifstream side(sidecar);
  if (!side) fail(ErrorKind::Parse, "cannot open " + sidecar.string());
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, sidecar.string() + ": " + e.what());
  }
  FeatureSet fs;
  FeatureSidecar m;
  try {
    m.k = j.at("k").get<std::size_t>();
    m.tau = j.at("tau").get<double>();
    m.n_samples = j.at("n_samples").get<std::size_t>();
    m.n_surface = j.value("n_surface", m.n_samples);
    m.seed = j.value("seed", std::uint64_t{0});
    m.loss_trace = j.value("loss_trace", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, sidecar.string() + ": " + e.what());
  }
  fs.k = m.k;
  fs.n = m.n_samples;
  fs.tau = m.tau;
  std::ifstream in(bin, std::ios::binary);
  if (!in) fail(ErrorKind::Parse, "cannot open " + bin.string());
  std::vector<float> buf(fs.n * fs.k);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) fail(ErrorKind::Parse, bin.string() + ": truncated feature file");
  fs.data.assign(buf.begin(), buf.end());
  if (meta) *meta = m;
  return fs;
}

void write_colored_points(const std::filesystem::path& path, const std::vector<SurfaceSample>& points,
                          const std::vector<std::array<double, 3>>& colors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const auto v = static_cast<float>(points[i].position[a]);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    for (int a = 0; a < 3; ++a) {
      const auto c = static_cast<unsigned char>(std::lround(std::clamp(colors[i][a], 0.0, 1.0) * 255.0));
      out.put(static_cast<char>(c));
    }
  }
}

} // namespace convfield
