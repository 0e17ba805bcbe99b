// Copyright 2026 The pcnr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// pcnr command-line driver.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pcnr/config.hpp"
#include "pcnr/gradcheck_suite.hpp"
#include "pcnr/image_io.hpp"
#include "pcnr/scene.hpp"
#include "pcnr/surface.hpp"
#include "pcnr/trainer.hpp"

namespace fs = std::filesystem;
using namespace pcnr;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig load_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  TrainConfig config;
  if (!config_path.empty()) apply_config(config, read_key_values(config_path), config_path);
  std::string joined;
  for (const auto& o : overrides) joined += o + "\n";
  apply_config(config, parse_key_values(joined, "--set"), "--set");
  config.validate();
  return config;
}

// Builds a directory next to `target`, then swaps it in.
template <typename Fill>
void write_directory_atomic(const fs::path& target, Fill fill) {
  fs::path staging = target;
  staging += ".partial";
  fs::remove_all(staging);
  fill(staging);
  if (fs::exists(target)) fs::remove_all(target);
  fs::rename(staging, target);
}

int gen_scene(const std::string& scene_path, const std::string& trajectory_path, const fs::path& out) {
  const AnalyticScene scene = scene_path.empty() ? two_primitive_scene() : read_scene(scene_path);
  scene.validate();
  const Trajectory t = trajectory_path.empty() ? Trajectory{} : read_trajectory(trajectory_path);
  const CameraIntrinsics k = trajectory_intrinsics(t);
  const auto poses = ring_poses(scene.box, t);
  write_directory_atomic(out, [&](const fs::path& dir) { write_dataset(dir, scene, k, poses); });
  std::cout << "wrote " << poses.size() << " views to " << out.string() << "\n";
  return 0;
}

int pretrain(const fs::path& data, const TrainConfig& config, const fs::path& out) {
  write_directory_atomic(out, [&](const fs::path& dir) { train(data, config, dir, &std::cout); });
  std::cout << "checkpoint: " << (out / "checkpoint.bin").string() << "\n";
  return 0;
}

int render(const fs::path& data, const fs::path& checkpoint, std::size_t view, const fs::path& out) {
  TrainSession s = load_session(checkpoint, read_dataset(data));
  const EvalResult r = evaluate(s, {view});
  fs::create_directories(out);
  const std::string stem = "render_" + frame_stem(view);
  const fs::path ppm = out / (stem + ".ppm");
  const fs::path pfm = out / (stem + ".pfm");
  write_ppm(fs::path(ppm.string() + ".tmp"), r.views[0].render.color);
  write_pfm(fs::path(pfm.string() + ".tmp"), r.views[0].render.depth);
  fs::rename(ppm.string() + ".tmp", ppm);
  fs::rename(pfm.string() + ".tmp", pfm);
  std::cout << "wrote " << ppm.string() << " and " << pfm.string() << "\n";
  return 0;
}

int extract_mesh(const fs::path& data, const fs::path& checkpoint, std::size_t resolution, const fs::path& out) {
  TrainSession s = load_session(checkpoint, read_dataset(data));
  NoGradGuard no_grad;
  const FeatureVolumePyramid volume = s.model.build_volume(s.cloud, s.config.resolutions);
  const SdfGrid grid = sample_sdf_grid(s.model.field, &volume, s.model.box, {resolution, resolution, resolution});
  const TriangleMesh mesh = marching_cubes(grid);
  write_file_atomic(out, format_obj(mesh));
  std::cout << "wrote " << mesh.vertices.size() << " vertices, " << mesh.triangles.size() << " triangles to "
            << out.string() << "\n";
  return 0;
}

int eval(const fs::path& data, const fs::path& checkpoint, const std::vector<std::size_t>& views,
         const std::string& out) {
  TrainSession s = load_session(checkpoint, read_dataset(data));
  std::vector<std::size_t> ids = views.empty() ? s.config.holdout : views;
  const std::string text = format_metrics(evaluate(s, ids));
  if (!out.empty()) write_file_atomic(out, text);
  std::cout << text;
  return 0;
}

int gradcheck_cmd(std::size_t instances) {
  bool ok = true;
  for (const auto& c : run_gradcheck_suite(instances)) {
    std::printf("%-18s %-9s instances=%zu max_rel_error=%.3e tol=%.0e %s%s%s\n", c.name.c_str(),
                c.composite ? "composite" : "primitive", c.instances, c.max_error, c.tolerance,
                c.passed ? "PASS" : "FAIL", c.detail.empty() ? "" : " ", c.detail.c_str());
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud pre-training with neural rendering: synthetic scenes, training, rendering, meshes"};
  app.require_subcommand(1);
  app.get_formatter()->column_width(34);

  auto* gen = app.add_subcommand("gen-scene", "Render a procedural RGB-D dataset");
  std::string scene_path, trajectory_path, gen_out;
  gen->add_option("--scene", scene_path, "Scene file (default: built-in two-primitive scene)");
  gen->add_option("--trajectory", trajectory_path, "Camera ring file (default: 6 views, 64x64)");
  gen->add_option("--out", gen_out, "Output dataset directory")->required();

  std::string data_dir, checkpoint, config_path;
  std::vector<std::string> overrides;

  auto* pre = app.add_subcommand("pretrain", "Train the encoder, feature volume and field on a dataset");
  std::string pre_out;
  pre->add_option("--data", data_dir, "Dataset directory")->required();
  pre->add_option("--config", config_path, "Training config file (key = value)");
  pre->add_option("--set", overrides, "Override a config key: --set key=value (repeatable)");
  pre->add_option("--out", pre_out, "Output run directory")->required();
  pre->footer("Config keys:\n" + train_config_help());

  auto* ren = app.add_subcommand("render", "Render a dataset view from a checkpoint (PPM color, PFM depth)");
  std::size_t view = 0;
  std::string render_out;
  ren->add_option("--data", data_dir, "Dataset directory")->required();
  ren->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ren->add_option("--view", view, "View index")->capture_default_str();
  ren->add_option("--out", render_out, "Output directory")->required();

  auto* mesh = app.add_subcommand("extract-mesh", "Marching cubes on the trained SDF, written as OBJ");
  std::size_t resolution = 64;
  std::string mesh_out;
  mesh->add_option("--data", data_dir, "Dataset directory")->required();
  mesh->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  mesh->add_option("--resolution", resolution, "Grid nodes per axis")->capture_default_str()->check(CLI::Range(2, 1024));
  mesh->add_option("--out", mesh_out, "Output OBJ path")->required();

  auto* ev = app.add_subcommand("eval", "PSNR and depth RMSE on views (default: the held-out views)");
  std::vector<std::size_t> views;
  std::string eval_out;
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--views", views, "View indices");
  ev->add_option("--out", eval_out, "Also write the metrics to this file");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable operation");
  std::size_t instances = 10;
  gc->add_option("--instances", instances, "Random instances per operation")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return gen_scene(scene_path, trajectory_path, gen_out);
    if (*pre) return pretrain(data_dir, load_config(config_path, overrides), pre_out);
    if (*ren) return render(data_dir, checkpoint, view, render_out);
    if (*mesh) return extract_mesh(data_dir, checkpoint, resolution, mesh_out);
    if (*ev) return eval(data_dir, checkpoint, views, eval_out);
    if (*gc) return gradcheck_cmd(instances);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
