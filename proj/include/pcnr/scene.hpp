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

// Procedural RGB-D scenes with exact geometry: analytic signed distances,
// sphere tracing, flat-albedo frame rendering and the on-disk dataset layout.
//
// Scene file (version 1), one primitive per line, repeated keys allowed:
//
//   version = 1
//   box_min = -1 -1 -1
//   box_max = 1 1 1
//   sphere  = cx cy cz radius           r g b
//   box     = cx cy cz hx hy hz         r g b
//   plane   = nx ny nz offset           r g b     # n . p = offset
//
// Dataset directory:
//   scene.txt  intrinsics.txt  frame_000.ppm  frame_000.pfm  frame_000.pose.txt ...
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pcnr/camera.hpp"

namespace pcnr {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
};

/// Points with normal . p > offset are outside.
struct HalfSpace {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
};

struct Primitive {
  std::variant<Sphere, Box, HalfSpace> shape;
  Vec3 albedo = Vec3::Constant(0.5);
};

double primitive_sdf(const Primitive& prim, const Vec3& p);

struct AnalyticScene {
  std::vector<Primitive> primitives;
  Aabb box;

  /// Throws GeometryError unless every primitive reaches into the box and
  /// every albedo lies in [0, 1].
  void validate() const;
};

/// min over primitives; exact outside every primitive.
double sdf_eval(const AnalyticScene& scene, const Vec3& p);
/// Index of the primitive with the smallest signed distance at p.
std::size_t nearest_primitive(const AnalyticScene& scene, const Vec3& p);
Vec3 albedo_at(const AnalyticScene& scene, const Vec3& p);

/// First surface crossing in (max(z_near, 0), z_far] found by sphere tracing
/// to |sdf| < 1e-6 followed by bisection on a sign-change bracket.
std::optional<double> sphere_trace(const AnalyticScene& scene, const Ray& ray);

/// Per-pixel sphere trace within the scene box; flat albedo shading; misses
/// get depth 0 and black.
RgbdFrame render_frame(const AnalyticScene& scene, const CameraIntrinsics& k, const Pose& pose);

AnalyticScene parse_scene(const std::string& text, const std::string& source = "<scene>");
AnalyticScene read_scene(const std::filesystem::path& path);
std::string format_scene(const AnalyticScene& scene);

/// Ring of cameras around the scene box center (z is up).
struct Trajectory {
  int views = 6;
  double radius = 3.0;
  double elevation_deg = 30.0;
  /// Added with alternating sign: view i sits at elevation + (-1)^i * swing.
  double elevation_swing_deg = 0.0;
  double azimuth0_deg = 0.0;
  int width = 64;
  int height = 64;
  double focal = 64.0;
};

Trajectory parse_trajectory(const std::string& text, const std::string& source = "<trajectory>");
Trajectory read_trajectory(const std::filesystem::path& path);
CameraIntrinsics trajectory_intrinsics(const Trajectory& t);
std::vector<Pose> ring_poses(const Aabb& box, const Trajectory& t);

struct Dataset {
  AnalyticScene scene;
  CameraIntrinsics intrinsics;
  std::vector<RgbdFrame> frames;
};

std::string frame_stem(std::size_t index);

/// Renders every pose and writes the dataset layout into `dir` (created if needed).
void write_dataset(const std::filesystem::path& dir, const AnalyticScene& scene, const CameraIntrinsics& k,
                   const std::vector<Pose>& poses);
/// Loads frame_000 .. frame_{n-1}; throws with the offending file on any malformed input.
Dataset read_dataset(const std::filesystem::path& dir);

/// Two-primitive scene used by the examples and the acceptance suite.
AnalyticScene two_primitive_scene();

}  // namespace pcnr
