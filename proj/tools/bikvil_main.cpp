// Copyright 2025 The Bikvil Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bikvil/bikac.hpp"
#include "bikvil/config.hpp"
#include "bikvil/pipeline.hpp"
#include "bikvil/synthgen.hpp"

namespace fs = std::filesystem;
using namespace bikvil;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool verbose = false;
  std::vector<std::string> overrides;  // section.key=value
};

PipelineConfig make_config(const GlobalOpts& g) {
  PipelineConfig cfg;
  std::string path = g.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("BIKVIL_CONFIG")) path = env;
  }
  if (!path.empty()) cfg = load_config(path);
  for (const auto& ov : g.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw SchemaError("--set expects section.key=value, got '" + ov + "'");
    cfg.set_key(ov.substr(0, eq), ov.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void print_graph_summary(const HmsrGraph& graph) {
  std::printf("nodes (%zu):\n", graph.nodes.size());
  for (const auto& n : graph.nodes)
    std::printf("  L%d  %-12s %s\n", n.level, n.id.c_str(), to_string(n.kind).c_str());
  std::printf("edges (%zu):\n", graph.edges.size());
  for (const auto& e : graph.edges) {
    std::string kinds;
    for (const auto& c : e.constraints) {
      if (!kinds.empty()) kinds += ",";
      kinds += to_string(c.kind);
      if (c.keypoint_index >= 0) kinds += "@" + std::to_string(c.keypoint_index);
    }
    std::printf("  %-12s -> %-12s [%s]\n", e.master.c_str(), e.slave.c_str(), kinds.c_str());
  }
  std::printf("coordination: %s\n  evidence: %s\n", to_string(graph.coordination.value).c_str(),
              graph.coordination.evidence.c_str());
}

int cmd_generate(const GlobalOpts& g, const std::string& task, int demos, const std::string& out,
                 double noise, double pose_jitter, double shape_jitter, int frames, double dt,
                 const std::string& scene_out, std::uint64_t scene_seed) {
  ScenarioConfig cfg;
  cfg.task = task_from_string(task);
  cfg.n_demos = demos;
  cfg.seed = g.seed;
  cfg.noise_sigma = noise;
  cfg.pose_jitter = pose_jitter;
  cfg.shape_jitter = shape_jitter;
  cfg.T = frames;
  cfg.dt = dt;
  cfg.validate();

  const auto [set, gt] = generate(cfg);
  save_demonstration_set(set, out);
  save_ground_truth(gt, fs::path(out) / "ground_truth.json");
  if (!scene_out.empty()) save_scene(generate_novel_scene(cfg, scene_seed), scene_out);
  if (g.verbose)
    std::printf("wrote %d demos (%s) to %s\n", set.num_demos(), task.c_str(), out.c_str());
  return 0;
}

int cmd_extract(const GlobalOpts& g, const std::string& in, const std::string& out,
                const std::string& report_path) {
  const PipelineConfig cfg = make_config(g);
  const DemonstrationSet set = load_demonstration_set(in);
  ExtractionResult res = run_extraction(set, cfg);
  save_graph(res.graph, out);
  if (!report_path.empty()) detail::write_json_file(report_path, res.report);
  print_graph_summary(res.graph);
  return 0;
}

int cmd_reproduce(const GlobalOpts& g, const std::string& graph_path, const std::string& scene_path,
                  const std::string& out, double horizon, int log_stride) {
  const PipelineConfig cfg = make_config(g);
  const HmsrGraph graph = load_graph(graph_path);
  SimScene scene = load_scene(scene_path);
  scene.dt = cfg.bikac.dt;
  const double h = horizon >= 0 ? horizon : cfg.bikac.horizon;
  const StepLog log = reproduce(graph, scene, cfg.kac_params(g.seed), h, log_stride);

  json out_json = steplog_to_json(log);
  out_json["meta"] = {{"graph", graph_path}, {"scene", scene_path}, {"seed", g.seed},
                      {"horizon", h},        {"config", cfg.to_json()}};
  detail::write_json_file(out, out_json);

  std::printf("%s after %d steps\n", log.converged ? "converged" : "did not converge", log.steps);
  for (const auto& row : log.summary["constraints"])
    std::printf("  %-4s %-10s -> %-10s residual %.4f m %s\n",
                row["kind"].get<std::string>().c_str(), row["master"].get<std::string>().c_str(),
                row["slave"].get<std::string>().c_str(), row["final_residual"].get<double>(),
                row["pass"].get<bool>() ? "ok" : "FAIL");
  return log.converged ? 0 : 3;
}

int cmd_evaluate(const std::string& graph_path, const std::string& truth_path,
                 const std::string& out) {
  const HmsrGraph graph = load_graph(graph_path);
  const GroundTruth truth = load_ground_truth(truth_path);
  const EvaluationResult res = evaluate_graph(graph, truth);

  std::printf("precision        %.3f\n", res.precision);
  std::printf("recall           %.3f\n", res.recall);
  std::printf("kind accuracy    %.3f\n", res.kind_accuracy);
  std::printf("coordination     %s\n", res.coordination_match ? "match" : "MISMATCH");
  std::printf("master direction %s\n", res.masters_correct ? "correct" : "WRONG");
  if (!out.empty()) detail::write_json_file(out, res.detail);
  std::cout << res.detail.dump(1, '\t') << "\n";
  return 0;
}

int cmd_export_scene(const std::string& scene_path, const std::string& log_path,
                     const std::string& out_dir, int stride) {
  SimScene scene = load_scene(scene_path);
  const json log = detail::load_json_file(log_path);
  fs::create_directories(out_dir);
  int written = 0;
  const auto& entries = log.at("entries");
  for (std::size_t i = 0; i < entries.size(); i += stride) {
    const auto& e = entries[i];
    char name[64];
    std::snprintf(name, sizeof name, "step_%06zu.csv", i);
    std::ofstream out(fs::path(out_dir) / name);
    if (!out) throw DataError("cannot write point cloud in '" + out_dir + "'");
    out << "body_id,point_index,x,y,z\n";
    for (const auto& b : e.at("bodies")) {
      SimBody* body = scene.find_body(b.at("id").get<std::string>());
      if (!body) continue;  // virtual bodies are not part of the scene file
      const auto& p = b.at("position");
      const auto& r = b.at("rotvec");
      Pose pose{rodrigues(Vec3(r[0], r[1], r[2])), Vec3(p[0], p[1], p[2])};
      const Points3 pts = pose.apply_cloud(body->shape_points);
      for (int k = 0; k < pts.cols(); ++k)
        out << body->id << ',' << k << ',' << pts(0, k) << ',' << pts(1, k) << ',' << pts(2, k)
            << "\n";
    }
    ++written;
  }
  std::printf("wrote %d point-cloud frames to %s\n", written, out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bikvil: bimanual task-constraint extraction and reproduction"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "TOML configuration file (env BIKVIL_CONFIG)");
  app.add_option("--seed", g.seed, "random seed for generation and target sampling");
  app.add_flag("--verbose", g.verbose, "chatty output");
  app.add_option("--set", g.overrides, "override one config value: section.key=value")
      ->take_all();

  auto* gen = app.add_subcommand("generate", "generate a synthetic demonstration set");
  std::string task, out_dir, scene_out;
  int demos = 7, frames = 100, stride = 1, log_stride = 1;
  double noise = 0.001, pose_jitter = 0.05, shape_jitter = 0.10, dt = 0.05, horizon = -1;
  std::uint64_t scene_seed = 1;
  gen->add_option("--task", task, "pour | place_on | place_arbitrary | uncoordinated_pair | symmetric_transport | unimanual")
      ->required();
  gen->add_option("--demos", demos, "number of demonstrations (>= 2)");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--noise-sigma", noise, "point noise sigma in meters");
  gen->add_option("--pose-jitter", pose_jitter, "pose jitter in meters");
  gen->add_option("--shape-jitter", shape_jitter, "relative shape jitter");
  gen->add_option("--frames", frames, "frames per demo");
  gen->add_option("--dt", dt, "frame period in seconds");
  gen->add_option("--scene-out", scene_out, "also write a novel scene JSON here");
  gen->add_option("--scene-seed", scene_seed, "seed offset for the novel scene");

  auto* ext = app.add_subcommand("extract", "extract an HMSR graph from a demonstration set");
  std::string in_dir, graph_out, report_path;
  ext->add_option("--in", in_dir, "demonstration-set directory")->required();
  ext->add_option("--out", graph_out, "output graph JSON")->required();
  ext->add_option("--report", report_path, "also write an analysis report JSON");

  auto* rep = app.add_subcommand("reproduce", "reproduce a learned task in a scene");
  std::string graph_in, scene_in, log_out;
  rep->add_option("--graph", graph_in, "HMSR graph JSON")->required();
  rep->add_option("--scene", scene_in, "scene JSON")->required();
  rep->add_option("--out", log_out, "output step-log JSON")->required();
  rep->add_option("--horizon", horizon, "simulated seconds (default from config)");
  rep->add_option("--log-stride", log_stride, "log every n-th step");

  auto* eva = app.add_subcommand("evaluate", "score a graph against ground truth");
  std::string truth_path, eval_out;
  eva->add_option("--graph", graph_in, "HMSR graph JSON")->required();
  eva->add_option("--truth", truth_path, "ground_truth.json")->required();
  eva->add_option("--out", eval_out, "write the detail report JSON here");

  auto* exp = app.add_subcommand("export-scene", "dump per-step point clouds from a step log");
  exp->add_option("--scene", scene_in, "scene JSON")->required();
  exp->add_option("--log", log_out, "step-log JSON")->required();
  exp->add_option("--out-dir", out_dir, "output directory for CSV clouds")->required();
  exp->add_option("--stride", stride, "export every n-th logged step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      if (demos < 2 || frames < 20 || noise < 0 || pose_jitter < 0 || shape_jitter < 0) {
        std::fprintf(stderr, "error: invalid generation parameters (demos >= 2, frames >= 20)\n");
        return 2;
      }
      try {
        task_from_string(task);
      } catch (const PreconditionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
      }
      return cmd_generate(g, task, demos, out_dir, noise, pose_jitter, shape_jitter, frames, dt,
                          scene_out, scene_seed);
    }
    if (ext->parsed()) return cmd_extract(g, in_dir, graph_out, report_path);
    if (rep->parsed()) return cmd_reproduce(g, graph_in, scene_in, log_out, horizon, log_stride);
    if (eva->parsed()) return cmd_evaluate(graph_in, truth_path, eval_out);
    if (exp->parsed()) return cmd_export_scene(scene_in, log_out, out_dir, stride);
  } catch (const SimulationError& e) {
    std::fprintf(stderr, "simulation error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
