// convfield: convex decomposition from a learned convexity feature field.

#include "convfield/pipeline.hpp"
#include "convfield/shapes.hpp"
#include "convfield/simd/kernels.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace {

using convfield::RunConfig;

struct Flags {
  std::string config;
  std::string input;
  std::string output;
  std::optional<double> epsilon;
  std::optional<std::size_t> max_hulls;
  std::optional<std::size_t> k;
  std::optional<double> tau;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> metric;
  std::optional<std::string> loss_mode;
  std::optional<int> threads;
  std::optional<std::size_t> n_samples;
  std::optional<std::size_t> metric_samples;
  std::optional<double> max_edge;
  std::string backend;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("input", f.input, "Input mesh (.obj or .ply)");
  cmd->add_option("-o,--output", f.output, "Output directory");
  cmd->add_option("--config", f.config, "JSON config file; flags override it");
  cmd->add_option("--epsilon", f.epsilon, "Concavity threshold");
  cmd->add_option("--max-hulls", f.max_hulls, "Maximum number of hulls");
  cmd->add_option("--k", f.k, "Feature dimension");
  cmd->add_option("--tau", f.tau, "Contrastive temperature");
  cmd->add_option("--steps", f.steps, "Optimizer steps");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--mode", f.mode, "Clustering mode")->check(CLI::IsMember({"mesh", "pointcloud"}));
  cmd->add_option("--metric", f.metric, "Concavity metric")->check(CLI::IsMember({"hausdorff", "chamfer"}));
  cmd->add_option("--loss-mode", f.loss_mode, "Training objective")
      ->check(CLI::IsMember({"contrastive", "plain"}));
  cmd->add_option("--threads", f.threads, "Worker threads (0: all)");
  cmd->add_option("--n-samples", f.n_samples, "Surface samples carrying features");
  cmd->add_option("--metric-samples", f.metric_samples, "Samples per metric evaluation");
  cmd->add_option("--max-edge", f.max_edge, "Refine faces to this edge length (normalized units, 0: off)");
  cmd->add_option("--backend", f.backend, "SIMD kernels")->check(CLI::IsMember({"auto", "scalar", "avx2"}));
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) c = convfield::load_config(f.config);
  if (!f.input.empty()) c.input_path = f.input;
  if (!f.output.empty()) c.output_dir = f.output;
  if (f.epsilon) c.epsilon = *f.epsilon;
  if (f.max_hulls) c.max_hulls = *f.max_hulls;
  if (f.k) c.k = *f.k;
  if (f.tau) c.tau = *f.tau;
  if (f.steps) c.steps = *f.steps;
  if (f.seed) c.seed = *f.seed;
  if (f.mode) c.mode = convfield::cluster_mode_from_string(*f.mode);
  if (f.metric) c.metric = convfield::metric_from_string(*f.metric);
  if (f.loss_mode) {
    c = convfield::config_from_json({{"loss_mode", *f.loss_mode}}, c);
  }
  if (f.threads) c.threads = *f.threads;
  if (f.n_samples) c.n_samples = *f.n_samples;
  if (f.metric_samples) c.n_metric_samples = *f.metric_samples;
  if (f.max_edge) c.max_edge = *f.max_edge;
  if (f.backend == "scalar") convfield::simd::set_backend(convfield::simd::Backend::Scalar);
  if (f.backend == "avx2") convfield::simd::set_backend(convfield::simd::Backend::Avx2);
  return c;
}

void report(const convfield::Error& e) {
  const nlohmann::json j = {{"error", convfield::error_category(e.kind())},
                            {"kind", std::string(convfield::to_string(e.kind()))},
                            {"message", e.what()}};
  std::cerr << j.dump() << std::endl;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex decomposition driven by a learned convexity feature field"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CONVFIELD_VERSION);

  Flags f;
  std::string features_dir;
  std::string hulls_dir;
  std::vector<double> sweep_eps;
  bool print_config = false;

  auto* decompose = app.add_subcommand("decompose", "Learn features and decompose a mesh into convex hulls");
  add_common(decompose, f);
  decompose->add_option("--features", features_dir, "Reuse features written by the features command");
  decompose->add_flag("--print-config", print_config, "Print the effective config and exit");

  auto* features = app.add_subcommand("features", "Learn and export the feature field only");
  add_common(features, f);

  auto* sweep = app.add_subcommand("sweep", "Decompose at several thresholds from one feature field");
  add_common(sweep, f);
  sweep->add_option("--eps", sweep_eps, "Thresholds (any order; run descending)");

  auto* eval = app.add_subcommand("eval", "Score an existing hull set against a mesh");
  add_common(eval, f);
  eval->add_option("--hulls", hulls_dir, "Directory of hull OBJ files")->required();

  auto* triplets = app.add_subcommand("triplets", "Write the contrastive triplets for a mesh");
  add_common(triplets, f);

  std::string shape_name;
  std::string shape_out;
  auto* shape = app.add_subcommand("shape", "Write one of the built-in test solids as OBJ");
  shape->add_option("name", shape_name, "Shape name")->required()->check(CLI::IsMember(convfield::shapes::names()));
  shape->add_option("output", shape_out, "Output OBJ path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : convfield::kExitParse;
  }

  try {
    if (*shape) {
      const convfield::TriangleMesh m = convfield::shapes::by_name(shape_name);
      convfield::write_obj(shape_out, m.vertices, m.faces);
      return 0;
    }
    RunConfig cfg = resolve(f);
    if (!sweep_eps.empty()) cfg.sweep_epsilons = sweep_eps;
    if (print_config) {
      std::cout << convfield::to_json(cfg).dump(2) << std::endl;
      return 0;
    }
    if (*decompose) {
      std::optional<std::filesystem::path> from;
      if (!features_dir.empty()) from = features_dir;
      return convfield::cmd_decompose(cfg, from);
    }
    if (*features) return convfield::cmd_features(cfg);
    if (*sweep) return convfield::cmd_sweep(cfg);
    if (*eval) {
      const nlohmann::json j = convfield::cmd_eval(cfg, hulls_dir);
      if (!f.output.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        std::FILE* out = std::fopen((std::filesystem::path(cfg.output_dir) / "eval.json").c_str(), "w");
        if (out == nullptr) convfield::fail(convfield::ErrorKind::Io, "cannot write eval.json");
        std::fputs((j.dump(2) + "\n").c_str(), out);
        std::fclose(out);
      }
      std::cout << j.dump(2) << std::endl;
      return 0;
    }
    if (*triplets) {
      convfield::validate(cfg);
      const convfield::PreparedShape shape = convfield::prepare_shape(cfg);
      const auto samples = convfield::feature_samples(shape.mesh, cfg);
      const auto set = convfield::build_triplets(shape.mesh, samples, convfield::triplet_config(cfg),
                                                 convfield::triplet_seed(cfg));
      std::filesystem::create_directories(cfg.output_dir);
      convfield::write_triplets(std::filesystem::path(cfg.output_dir) / "triplets.bin", set);
      std::cout << set.triplets.size() << " triplets from " << set.anchors_used << " of "
                << set.anchors_tried << " anchors" << std::endl;
      return 0;
    }
  } catch (const convfield::Error& e) {
    report(e);
    return convfield::exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    report(convfield::Error(convfield::ErrorKind::Io, e.what()));
    return convfield::exit_code_for(convfield::ErrorKind::Io);
  } catch (const std::exception& e) {
    report(convfield::Error(convfield::ErrorKind::Internal, e.what()));
    return convfield::kExitInternal;
  }
  return convfield::kExitInternal;
}
