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

// Pinhole camera model, back-projection of RGB-D frames to colored point
// clouds, ray generation and ray/box intersection.
//
// Conventions:
//  * Poses map world to camera: x_cam = R x_world + t.
//  * Pixel (u, v) is the integer pixel coordinate itself; there is no
//    half-pixel offset. u grows to the right, v downwards, +z looks forward.
//  * Depth images store the distance from the camera center to the surface
//    along the pixel ray (the quantity a ray marcher returns). 0 marks an
//    invalid pixel.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pcnr/image_io.hpp"

namespace pcnr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws GeometryError unless fx, fy > 0 and the principal point is inside the image.
  void validate() const;
  Mat3 matrix() const;
  /// K^-1 [u, v, 1]
  Vec3 unproject(double u, double v) const;
};

/// World-to-camera rigid transform.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& m);
  Mat4 matrix() const;

  /// Throws GeometryError unless R is orthonormal with det 1 (within 1e-9).
  void validate() const;
  Vec3 camera_center() const { return -rotation.transpose() * translation; }
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 to_world(const Vec3& cam) const { return rotation.transpose() * (cam - translation); }
};

/// Camera looking from `eye` at `target`; image v axis follows -up.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double z_near = 0.0;
  double z_far = 0.0;

  Vec3 at(double z) const { return origin + z * direction; }
};

struct Aabb {
  Vec3 min = Vec3::Constant(-1.0);
  Vec3 max = Vec3::Constant(1.0);

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  double diagonal() const { return extent().norm(); }
  bool contains(const Vec3& p, double slack = 0.0) const {
    return (p.array() >= min.array() - slack).all() && (p.array() <= max.array() + slack).all();
  }
};

struct RgbdFrame {
  ColorImage color;
  DepthImage depth;
  CameraIntrinsics intrinsics;
  Pose pose;

  /// Throws GeometryError on mismatched extents, non-finite or negative depth,
  /// or colors outside [0, 1].
  void validate() const;
};

struct ColoredPointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  Aabb bounds() const;
  ColoredPointCloud subset(const std::vector<std::size_t>& indices) const;
};

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  /// Distance from the camera center along the ray (depth-image convention).
  double depth = 0.0;
};

PixelProjection project(const Vec3& world, const CameraIntrinsics& k, const Pose& pose);
Vec3 back_project_pixel(double u, double v, double depth, const CameraIntrinsics& k, const Pose& pose);

/// One point per pixel with depth > 0, colored from the pixel.
ColoredPointCloud back_project(const RgbdFrame& frame);

/// Ray through the pixel, origin at the camera center; bounds are left at 0.
Ray generate_ray(double u, double v, const CameraIntrinsics& k, const Pose& pose);

/// Slab test. Returns the entry and exit ray lengths, entry clamped to 0 when
/// the origin is inside. Touching a box edge or corner counts as a miss.
std::optional<std::pair<double, double>> ray_aabb(const Ray& ray, const Aabb& box);

/// k distinct indices drawn uniformly from [0, n), returned ascending
/// (partial Fisher-Yates over one Rng stream). k >= n returns all indices.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, std::uint64_t seed);

/// Union of per-frame back-projections, uniformly downsampled to target_count
/// (kept whole when smaller). Throws GeometryError when no frame has a valid pixel.
ColoredPointCloud build_cloud(const std::vector<RgbdFrame>& frames, std::size_t target_count, std::uint64_t seed);

/// "fx fy cx cy width height" on one line.
void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k);
CameraIntrinsics read_intrinsics(const std::filesystem::path& path);
/// Four lines of four numbers: the row-major world-to-camera matrix.
void write_pose(const std::filesystem::path& path, const Pose& pose);
Pose read_pose(const std::filesystem::path& path);

}  // namespace pcnr
