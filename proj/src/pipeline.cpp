#include "convfield/pipeline.hpp"

#include "convfield/error.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace convfield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSampleStream = 0x5a11;
constexpr std::uint64_t kTripletStream = 0x7217;
constexpr std::uint64_t kConcavityStream = 0xc0ca;

std::string loss_mode_name(LossMode m) {
  return m == LossMode::Plain ? "plain" : "contrastive";
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "contrastive") return LossMode::Contrastive;
  if (s == "plain") return LossMode::Plain;
  fail(ErrorKind::InvalidArgument, "unknown loss_mode '" + s + "' (expected contrastive or plain)");
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
}

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

std::vector<Vec3> to_input_frame(const std::vector<Vec3>& pts, const NormalizeTransform& t) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const Vec3& p : pts) out.push_back(p / t.scale + t.center);
  return out;
}

std::string hull_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "hull_%03zu.obj", i);
  return buf;
}

// hull_###.obj per hull plus hulls.obj with one group per hull; returns the
// file names written.
std::vector<std::string> write_hulls(const fs::path& dir, const std::vector<ConvexHull>& hulls,
                                     const NormalizeTransform& t) {
  std::vector<std::string> files;
  std::ostringstream combined;
  combined.precision(17);
  std::size_t offset = 1;
  for (std::size_t i = 0; i < hulls.size(); ++i) {
    const std::vector<Vec3> verts = to_input_frame(hulls[i].vertices, t);
    write_obj(dir / hull_name(i), verts, hulls[i].faces);
    files.push_back(hull_name(i));
    combined << "g hull_" << i << "\n";
    char buf[96];
    for (const Vec3& v : verts) {
      std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
      combined << buf;
    }
    for (const Face& f : hulls[i].faces) {
      combined << "f " << f[0] + offset << ' ' << f[1] + offset << ' ' << f[2] + offset << "\n";
    }
    offset += verts.size();
  }
  write_text(dir / "hulls.obj", combined.str());
  files.push_back("hulls.obj");
  return files;
}

json tree_json(const Decomposition& d) {
  json nodes = json::array();
  for (const Component& c : d.nodes) {
    nodes.push_back({{"id", c.id},
                     {"parent", c.parent},
                     {"generation", c.generation},
                     {"children", c.children},
                     {"faces", c.face_ids.size()},
                     {"samples", c.sample_ids.size()},
                     {"concavity", c.concavity.value},
                     {"leaf", c.is_leaf},
                     {"flag", to_string(c.flag)}});
  }
  return nodes;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    json extra, std::vector<std::string> files) {
  files.push_back("manifest.json");
  std::sort(files.begin(), files.end());
  json m = {{"tool", "convfield"}, {"version", CONVFIELD_VERSION}, {"command", command},
            {"config", to_json(cfg)}, {"files", files}};
  for (auto& [key, value] : extra.items()) m[key] = value;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

json feature_stats(const FeatureRun& run) {
  return {{"triplets", run.n_triplets},
          {"anchors_used", run.anchors_used},
          {"anchors_tried", run.anchors_tried}};
}

} // namespace

void validate(const RunConfig& cfg) {
  auto need = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::InvalidArgument, std::string("config: ") + what);
  };
  need(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0, "epsilon must lie in (0, 1]");
  need(cfg.max_hulls >= 1, "max_hulls must be positive");
  need(cfg.k >= 1, "k must be positive");
  need(cfg.tau > 0.0, "tau must be positive");
  need(cfg.steps >= 1, "steps must be positive");
  need(cfg.batch_size >= 1, "batch_size must be positive");
  need(cfg.learning_rate > 0.0, "learning_rate must be positive");
  need(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "momentum must lie in [0, 1)");
  need(cfg.field_resolution >= 2, "field_resolution must be at least 2");
  need(cfg.blend_weight >= 0.0 && cfg.blend_weight <= 1.0, "blend_weight must lie in [0, 1]");
  need(cfg.n_samples >= 3, "n_samples must be at least 3");
  need(cfg.max_edge >= 0.0, "max_edge must be non-negative");
  need(cfg.n_anchors >= 1, "n_anchors must be positive");
  need(cfg.n_pos_per_anchor >= 1, "n_pos_per_anchor must be positive");
  need(cfg.n_neg_candidates >= 1, "n_neg_candidates must be positive");
  need(cfg.n_neg_per_triplet >= 1, "n_neg_per_triplet must be positive");
  need(cfg.hard_fraction >= 0.0 && cfg.hard_fraction <= 1.0, "hard_fraction must lie in [0, 1]");
  need(cfg.triplets_per_anchor >= 1, "triplets_per_anchor must be positive");
  need(cfg.n_metric_samples >= 1, "n_metric_samples must be positive");
  need(cfg.threads >= 0, "threads must be non-negative");
  for (double e : cfg.sweep_epsilons) need(e > 0.0 && e <= 1.0, "sweep epsilons must lie in (0, 1]");
}

json to_json(const RunConfig& c) {
  return {{"input_path", c.input_path},
          {"output_dir", c.output_dir},
          {"epsilon", c.epsilon},
          {"max_hulls", c.max_hulls},
          {"k", c.k},
          {"tau", c.tau},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"field_resolution", c.field_resolution},
          {"seed", c.seed},
          {"mode", to_string(c.mode)},
          {"blend_weight", c.blend_weight},
          {"n_samples", c.n_samples},
          {"max_edge", c.max_edge},
          {"n_anchors", c.n_anchors},
          {"n_pos_per_anchor", c.n_pos_per_anchor},
          {"n_neg_candidates", c.n_neg_candidates},
          {"n_neg_per_triplet", c.n_neg_per_triplet},
          {"hard_fraction", c.hard_fraction},
          {"triplets_per_anchor", c.triplets_per_anchor},
          {"loss_mode", loss_mode_name(c.loss_mode)},
          {"metric", to_string(c.metric)},
          {"n_metric_samples", c.n_metric_samples},
          {"threads", c.threads},
          {"sweep_epsilons", c.sweep_epsilons}};
}

RunConfig config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) fail(ErrorKind::Parse, "config must be a JSON object");
  try {
    for (auto& [key, v] : j.items()) {
      if (key == "input_path") c.input_path = v.get<std::string>();
      else if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "max_hulls") c.max_hulls = v.get<std::size_t>();
      else if (key == "k") c.k = v.get<std::size_t>();
      else if (key == "tau") c.tau = v.get<double>();
      else if (key == "steps") c.steps = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "field_resolution") c.field_resolution = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "mode") c.mode = cluster_mode_from_string(v.get<std::string>());
      else if (key == "blend_weight") c.blend_weight = v.get<double>();
      else if (key == "n_samples") c.n_samples = v.get<std::size_t>();
      else if (key == "max_edge") c.max_edge = v.get<double>();
      else if (key == "n_anchors") c.n_anchors = v.get<std::size_t>();
      else if (key == "n_pos_per_anchor") c.n_pos_per_anchor = v.get<std::size_t>();
      else if (key == "n_neg_candidates") c.n_neg_candidates = v.get<std::size_t>();
      else if (key == "n_neg_per_triplet") c.n_neg_per_triplet = v.get<std::size_t>();
      else if (key == "hard_fraction") c.hard_fraction = v.get<double>();
      else if (key == "triplets_per_anchor") c.triplets_per_anchor = v.get<std::size_t>();
      else if (key == "loss_mode") c.loss_mode = loss_mode_from_string(v.get<std::string>());
      else if (key == "metric") c.metric = metric_from_string(v.get<std::string>());
      else if (key == "n_metric_samples") c.n_metric_samples = v.get<std::size_t>();
      else if (key == "threads") c.threads = v.get<int>();
      else if (key == "sweep_epsilons") c.sweep_epsilons = v.get<std::vector<double>>();
      else fail(ErrorKind::Parse, "config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const fs::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Parse, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

void save_config(const fs::path& path, const RunConfig& cfg) {
  write_text(path, to_json(cfg).dump(2) + "\n");
}

TripletConfig triplet_config(const RunConfig& c) {
  TripletConfig t;
  t.n_anchors = c.n_anchors;
  t.n_pos_per_anchor = c.n_pos_per_anchor;
  t.n_neg_candidates = c.n_neg_candidates;
  t.n_neg_per_triplet = c.n_neg_per_triplet;
  t.hard_fraction = c.hard_fraction;
  t.triplets_per_anchor = c.triplets_per_anchor;
  return t;
}

OptimizeConfig optimize_config(const RunConfig& c) {
  OptimizeConfig o;
  o.k = c.k;
  o.tau = c.tau;
  o.steps = c.steps;
  o.batch_size = c.batch_size;
  o.learning_rate = c.learning_rate;
  o.momentum = c.momentum;
  o.loss_mode = c.loss_mode;
  o.field_resolution = c.field_resolution;
  o.seed = c.seed;
  return o;
}

DecomposeConfig decompose_config(const RunConfig& c) {
  DecomposeConfig d;
  d.epsilon = c.epsilon;
  d.max_hulls = c.max_hulls;
  d.mode = c.mode;
  d.blend_weight = c.blend_weight;
  d.metric = c.metric;
  d.n_metric_samples = c.n_metric_samples;
  d.seed = c.seed;
  return d;
}

PreparedShape prepare_shape(const SolidMesh& raw, const RunConfig& cfg) {
  PreparedShape p{normalize(raw, nullptr), {}, {}};
  p.mesh = normalize(raw, &p.transform);
  if (cfg.max_edge > 0.0) p.mesh = refine(p.mesh, cfg.max_edge);
  return p;
}

PreparedShape prepare_shape(const RunConfig& cfg) {
  const fs::path path(cfg.input_path);
  if (cfg.input_path.empty()) fail(ErrorKind::Parse, "no input mesh given");
  const auto format = format_from_path(path);
  if (!format) fail(ErrorKind::Parse, "unsupported mesh extension: " + path.string());
  std::vector<std::string> warnings;
  const SolidMesh raw = load_mesh(path, *format, &warnings);
  PreparedShape p = prepare_shape(raw, cfg);
  p.warnings = std::move(warnings);
  return p;
}

std::vector<SurfaceSample> feature_samples(const SolidMesh& mesh, const RunConfig& cfg) {
  return sample_surface(mesh, cfg.n_samples, derive_seed(cfg.seed, kSampleStream));
}

std::uint64_t triplet_seed(const RunConfig& cfg) {
  return derive_seed(cfg.seed, kTripletStream);
}

FeatureRun learn_features(const SolidMesh& mesh, const RunConfig& cfg, const TripletSet* triplets) {
  FeatureRun run;
  run.samples = feature_samples(mesh, cfg);
  TripletSet built;
  if (triplets == nullptr) {
    built = build_triplets(mesh, run.samples, triplet_config(cfg), triplet_seed(cfg));
    triplets = &built;
  }
  if (triplets->n_surface != run.samples.size()) {
    fail(ErrorKind::InvalidArgument, "triplet set was built for a different sample set");
  }
  run.n_triplets = triplets->triplets.size();
  run.anchors_used = triplets->anchors_used;
  run.anchors_tried = triplets->anchors_tried;
  OptimizeResult opt = optimize_single_shape(mesh, *triplets, optimize_config(cfg));
  run.features = std::move(opt.features);
  run.features.n = run.samples.size();
  run.features.data.resize(run.features.n * run.features.k);
  run.loss_trace = std::move(opt.loss_trace);
  return run;
}

HullMetrics evaluate_hulls(const SolidMesh& mesh, const std::vector<ConvexHull>& hulls,
                           const RunConfig& cfg) {
  if (hulls.empty()) fail(ErrorKind::InvalidArgument, "no hulls to evaluate");
  HullMetrics m;
  for (const ConvexHull& h : hulls) {
    m.concavity.push_back(concavity(mesh, h, cfg.n_metric_samples,
                                    derive_seed(cfg.seed, kConcavityStream), cfg.metric));
    m.max_concavity = std::max(m.max_concavity, m.concavity.back().value);
  }
  m.reconstruction = reconstruction_error(mesh, hulls, cfg.n_metric_samples, cfg.seed);
  return m;
}

DecomposeOutcome decompose_features(const SolidMesh& mesh, const std::vector<SurfaceSample>& samples,
                                    const FeatureSet& fs, const RunConfig& cfg) {
  DecomposeOutcome out;
  out.decomposition = recursive_decompose(mesh, samples, fs, decompose_config(cfg));
  out.hulls = out.decomposition.leaf_hulls();
  for (int id : out.decomposition.leaves) {
    const ConcavityScore& s = out.decomposition.nodes[id].concavity;
    out.metrics.concavity.push_back(s);
    out.metrics.max_concavity = std::max(out.metrics.max_concavity, s.value);
  }
  out.metrics.reconstruction = reconstruction_error(mesh, out.hulls, cfg.n_metric_samples, cfg.seed);
  return out;
}

DecomposeOutcome convex_shortcut(const SolidMesh& mesh, const RunConfig& cfg) {
  DecomposeOutcome out;
  out.convex_shortcut = true;
  out.hulls.push_back(convex_hull_inflated(mesh.vertices()));
  out.metrics = evaluate_hulls(mesh, out.hulls, cfg);
  out.decomposition.epsilon = cfg.epsilon;
  out.decomposition.max_hulls = cfg.max_hulls;
  return out;
}

PipelineRun run_pipeline(const SolidMesh& mesh, const RunConfig& cfg, const TripletSet* triplets) {
  PipelineRun run;
  try {
    run.features = learn_features(mesh, cfg, triplets);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::OracleStarvation) throw;
    run.shortcut_reason = e.what();
    run.outcome = convex_shortcut(mesh, cfg);
    return run;
  }
  run.outcome = decompose_features(mesh, run.features.samples, run.features.features, cfg);
  return run;
}

json metrics_json(const DecomposeOutcome& out, const RunConfig& cfg) {
  json comps = json::array();
  for (std::size_t i = 0; i < out.hulls.size(); ++i) {
    const ConcavityScore& s = out.metrics.concavity[i];
    json c = {{"index", i},
              {"file", hull_name(i)},
              {"concavity", s.value},
              {"surface_h", s.surface_h},
              {"volume_h", s.volume_h},
              {"empty_interior", s.empty_interior},
              {"hull_vertices", out.hulls[i].vertices.size()},
              {"hull_volume", out.hulls[i].volume}};
    if (!out.convex_shortcut) {
      const Component& node = out.decomposition.nodes[out.decomposition.leaves[i]];
      c["node"] = node.id;
      c["flag"] = to_string(node.flag);
      c["faces"] = node.face_ids.size();
      c["samples"] = node.sample_ids.size();
    } else {
      c["flag"] = "none";
    }
    comps.push_back(std::move(c));
  }
  return {{"component_count", out.hulls.size()},
          {"max_concavity", out.metrics.max_concavity},
          {"reconstruction_error", out.metrics.reconstruction},
          {"metric", to_string(cfg.metric)},
          {"epsilon", cfg.epsilon},
          {"max_hulls", cfg.max_hulls},
          {"seed", cfg.seed},
          {"convex_shortcut", out.convex_shortcut},
          {"units", "normalized (longest bounding-box extent = 2)"},
          {"components", comps}};
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse:
    case ErrorKind::Io:
    case ErrorKind::InvalidArgument:
      return kExitParse;
    case ErrorKind::NonManifold:
    case ErrorKind::DegenerateGeometry:
    case ErrorKind::LowAcceptance:
    case ErrorKind::DegenerateHull:
    case ErrorKind::EmptyInterior:
    case ErrorKind::Indivisible:
    case ErrorKind::OracleStarvation:
      return kExitGeometry;
    case ErrorKind::NonConvexInput:
      return kExitNonConvex;
    case ErrorKind::Internal:
      return kExitInternal;
  }
  return kExitInternal;
}

std::string error_category(ErrorKind kind) {
  switch (exit_code_for(kind)) {
    case kExitParse: return "parse";
    case kExitGeometry: return "geometry";
    case kExitNonConvex: return "nonconvex_input";
    default: return "internal";
  }
}

int cmd_decompose(const RunConfig& cfg, const std::optional<fs::path>& features_dir) {
  validate(cfg);
  apply_threads(cfg);
  Stopwatch clock;
  json timings;
  const PreparedShape shape = prepare_shape(cfg);
  timings["load"] = clock.lap();
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  json extra;
  DecomposeOutcome out;
  if (features_dir) {
    FeatureSidecar meta;
    FeatureSet features =
        read_features(*features_dir / "features.bin", *features_dir / "features.json", &meta);
    if (meta.n_samples != cfg.n_samples || meta.k != cfg.k || meta.seed != cfg.seed) {
      fail(ErrorKind::InvalidArgument, "feature file does not match n_samples/k/seed of the config");
    }
    const std::vector<SurfaceSample> samples = feature_samples(shape.mesh, cfg);
    timings["features"] = clock.lap();
    out = decompose_features(shape.mesh, samples, features, cfg);
  } else {
    PipelineRun run = run_pipeline(shape.mesh, cfg);
    out = std::move(run.outcome);
    if (out.convex_shortcut) {
      extra["shortcut_reason"] = run.shortcut_reason;
    } else {
      extra["triplets"] = feature_stats(run.features);
    }
  }
  timings["decompose"] = clock.lap();

  std::vector<std::string> files = write_hulls(dir, out.hulls, shape.transform);
  const json metrics = metrics_json(out, cfg);
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  files.push_back("metrics.json");
  if (!out.convex_shortcut) {
    write_tree_dot(dir / "tree.dot", out.decomposition);
    files.push_back("tree.dot");
    extra["tree"] = tree_json(out.decomposition);
  }
  timings["export"] = clock.lap();
  extra["timings_seconds"] = timings;
  extra["metrics"] = metrics;
  extra["warnings"] = shape.warnings;
  extra["convex_shortcut"] = out.convex_shortcut;
  write_manifest(dir, "decompose", cfg, extra, files);
  return out.convex_shortcut ? kExitConvexShortcut : kExitOk;
}

int cmd_features(const RunConfig& cfg) {
  validate(cfg);
  apply_threads(cfg);
  Stopwatch clock;
  json timings;
  const PreparedShape shape = prepare_shape(cfg);
  timings["load"] = clock.lap();
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  const FeatureRun run = learn_features(shape.mesh, cfg);
  timings["features"] = clock.lap();

  FeatureSidecar meta;
  meta.k = run.features.k;
  meta.tau = run.features.tau;
  meta.n_samples = run.features.n;
  meta.n_surface = run.features.n;
  meta.seed = cfg.seed;
  meta.loss_trace = run.loss_trace;
  write_features(dir / "features.bin", dir / "features.json", run.features, meta);
  std::vector<SurfaceSample> points = run.samples;
  for (SurfaceSample& s : points) s.position = s.position / shape.transform.scale + shape.transform.center;
  write_colored_points(dir / "features_pca.ply", points, pca_colors(run.features));
  timings["export"] = clock.lap();
  json extra = {{"timings_seconds", timings},
                {"triplets", feature_stats(run)},
                {"warnings", shape.warnings}};
  write_manifest(dir, "features", cfg, extra, {"features.bin", "features.json", "features_pca.ply"});
  return kExitOk;
}

int cmd_sweep(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.sweep_epsilons.empty()) fail(ErrorKind::InvalidArgument, "config: no sweep epsilons");
  apply_threads(cfg);
  Stopwatch clock;
  json timings;
  const PreparedShape shape = prepare_shape(cfg);
  timings["load"] = clock.lap();
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  std::vector<double> eps = cfg.sweep_epsilons;
  std::sort(eps.begin(), eps.end(), std::greater<double>());

  std::vector<SweepRow> rows;
  std::vector<std::vector<ConvexHull>> hull_sets;
  json extra;
  bool shortcut = false;
  try {
    FeatureRun run = learn_features(shape.mesh, cfg);
    timings["features"] = clock.lap();
    extra["triplets"] = feature_stats(run);
    const auto decomps =
        granularity_sweep(shape.mesh, run.samples, run.features, eps, decompose_config(cfg), &rows);
    for (const Decomposition& d : decomps) hull_sets.push_back(d.leaf_hulls());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::OracleStarvation) throw;
    timings["features"] = clock.lap();
    shortcut = true;
    extra["shortcut_reason"] = e.what();
    const DecomposeOutcome single = convex_shortcut(shape.mesh, cfg);
    for (double e2 : eps) {
      rows.push_back({e2, 1, single.metrics.max_concavity, single.metrics.reconstruction});
      hull_sets.push_back(single.hulls);
    }
  }
  timings["decompose"] = clock.lap();

  std::vector<std::string> files;
  write_sweep_csv(dir / "sweep.csv", rows);
  files.push_back("sweep.csv");
  for (std::size_t i = 0; i < hull_sets.size(); ++i) {
    char sub[32];
    std::snprintf(sub, sizeof sub, "eps_%02zu", i);
    fs::create_directories(dir / sub);
    for (const std::string& f : write_hulls(dir / sub, hull_sets[i], shape.transform)) {
      files.push_back(std::string(sub) + "/" + f);
    }
  }
  timings["export"] = clock.lap();
  extra["timings_seconds"] = timings;
  extra["convex_shortcut"] = shortcut;
  extra["warnings"] = shape.warnings;
  write_manifest(dir, "sweep", cfg, extra, files);
  return shortcut ? kExitConvexShortcut : kExitOk;
}

json cmd_eval(const RunConfig& cfg, const fs::path& hull_dir) {
  validate(cfg);
  apply_threads(cfg);
  const PreparedShape shape = prepare_shape(cfg);
  if (!fs::is_directory(hull_dir)) fail(ErrorKind::Parse, "not a directory: " + hull_dir.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(hull_dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("hull_", 0) == 0 && entry.path().extension() == ".obj") {
      paths.push_back(entry.path());
    }
  }
  if (paths.empty()) {
    for (const auto& entry : fs::directory_iterator(hull_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".obj" &&
          entry.path().filename() != "hulls.obj") {
        paths.push_back(entry.path());
      }
    }
  }
  if (paths.empty()) fail(ErrorKind::Parse, "no hull OBJ files in " + hull_dir.string());
  std::sort(paths.begin(), paths.end());

  const NormalizeTransform& t = shape.transform;
  const double tol = 1e-6 * shape.mesh.diagonal();
  std::vector<ConvexHull> hulls;
  for (const fs::path& p : paths) {
    TriangleMesh tm = read_triangles(p, MeshFormat::Obj);
    for (Vec3& v : tm.vertices) v = (v - t.center) * t.scale;
    if (!is_convex_polytope(tm.vertices, tm.faces, tol)) {
      fail(ErrorKind::NonConvexInput, p.filename().string() + " is not a convex polytope");
    }
    hulls.push_back(hull_from_mesh(std::move(tm.vertices), std::move(tm.faces)));
  }
  const HullMetrics m = evaluate_hulls(shape.mesh, hulls, cfg);
  json comps = json::array();
  for (std::size_t i = 0; i < hulls.size(); ++i) {
    comps.push_back({{"index", i},
                     {"file", paths[i].filename().string()},
                     {"concavity", m.concavity[i].value},
                     {"surface_h", m.concavity[i].surface_h},
                     {"volume_h", m.concavity[i].volume_h},
                     {"empty_interior", m.concavity[i].empty_interior}});
  }
  return {{"component_count", hulls.size()},
          {"max_concavity", m.max_concavity},
          {"reconstruction_error", m.reconstruction},
          {"metric", to_string(cfg.metric)},
          {"seed", cfg.seed},
          {"units", "normalized (longest bounding-box extent = 2)"},
          {"components", comps}};
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "epsilon,components,max_concavity,reconstruction_error\n";
  char buf[160];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g,%.17g\n", r.epsilon, r.components,
                  r.max_concavity, r.reconstruction);
    out << buf;
  }
  write_text(path, out.str());
}

std::vector<SweepRow> read_sweep_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Parse, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "epsilon,components,max_concavity,reconstruction_error") {
    fail(ErrorKind::Parse, path.string() + ": unexpected CSV header");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SweepRow r;
    if (std::sscanf(line.c_str(), "%lf,%zu,%lf,%lf", &r.epsilon, &r.components, &r.max_concavity,
                    &r.reconstruction) != 4) {
      fail(ErrorKind::Parse, path.string() + ": bad row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

} // namespace convfield
