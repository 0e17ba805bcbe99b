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

#include "pcnr/camera.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "pcnr/rng.hpp"

namespace pcnr {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw GeometryError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw GeometryError("intrinsics: image extents must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw GeometryError("intrinsics: principal point (" + fmt17(cx) + ", " + fmt17(cy) + ") outside the image");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Vec3 CameraIntrinsics::unproject(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }

Pose Pose::from_matrix(const Mat4& m) {
  Pose p;
  p.rotation = m.topLeftCorner<3, 3>();
  p.translation = m.topRightCorner<3, 1>();
  return p;
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

void Pose::validate() const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-9)) throw GeometryError("pose: rotation is not orthonormal (|R^T R - I| = " + fmt17(ortho) + ")");
  if (!(std::abs(rotation.determinant() - 1.0) <= 1e-9)) throw GeometryError("pose: rotation determinant is not 1");
  if (!translation.allFinite()) throw GeometryError("pose: non-finite translation");
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Pose p;
  p.rotation.row(0) = right.transpose();
  p.rotation.row(1) = down.transpose();
  p.rotation.row(2) = forward.transpose();
  p.translation = -p.rotation * eye;
  return p;
}

void RgbdFrame::validate() const {
  intrinsics.validate();
  pose.validate();
  if (color.width != intrinsics.width || color.height != intrinsics.height || depth.width != intrinsics.width ||
      depth.height != intrinsics.height) {
    throw GeometryError("frame: image extents disagree with the intrinsics");
  }
  for (double d : depth.depth) {
    if (!std::isfinite(d) || d < 0.0) throw GeometryError("frame: depth must be finite and non-negative");
  }
  for (double c : color.rgb) {
    if (!(c >= 0.0 && c <= 1.0)) throw GeometryError("frame: color outside [0, 1]");
  }
}

Aabb ColoredPointCloud::bounds() const {
  Aabb box{Vec3::Constant(std::numeric_limits<double>::infinity()),
           Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& p : positions) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

ColoredPointCloud ColoredPointCloud::subset(const std::vector<std::size_t>& indices) const {
  ColoredPointCloud out;
  out.positions.reserve(indices.size());
  out.colors.reserve(indices.size());
  for (std::size_t i : indices) {
    out.positions.push_back(positions[i]);
    out.colors.push_back(colors[i]);
  }
  return out;
}

PixelProjection project(const Vec3& world, const CameraIntrinsics& k, const Pose& pose) {
  const Vec3 cam = pose.to_camera(world);
  return {k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy, cam.norm()};
}

Vec3 back_project_pixel(double u, double v, double depth, const CameraIntrinsics& k, const Pose& pose) {
  const Vec3 ray_cam = k.unproject(u, v);
  // Pinhole scale s: the camera-space z of the point at `depth` along the ray.
  const double s = depth / ray_cam.norm();
  return pose.to_world(s * ray_cam);
}

ColoredPointCloud back_project(const RgbdFrame& frame) {
  ColoredPointCloud cloud;
  const auto& k = frame.intrinsics;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const double d = frame.depth.at(u, v);
      if (!(d > 0.0)) continue;
      cloud.positions.push_back(back_project_pixel(u, v, d, k, frame.pose));
      cloud.colors.emplace_back(frame.color.at(u, v, 0), frame.color.at(u, v, 1), frame.color.at(u, v, 2));
    }
  }
  return cloud;
}

Ray generate_ray(double u, double v, const CameraIntrinsics& k, const Pose& pose) {
  Ray ray;
  ray.origin = pose.camera_center();
  ray.direction = (pose.rotation.transpose() * k.unproject(u, v)).normalized();
  return ray;
}

std::optional<std::pair<double, double>> ray_aabb(const Ray& ray, const Aabb& box) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (d == 0.0) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    double t0 = (box.min[a] - o) / d;
    double t1 = (box.max[a] - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  t_enter = std::max(t_enter, 0.0);
  if (!(t_exit > t_enter)) return std::nullopt;
  return std::make_pair(t_enter, t_exit);
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k >= n) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ColoredPointCloud build_cloud(const std::vector<RgbdFrame>& frames, std::size_t target_count, std::uint64_t seed) {
  if (frames.empty()) throw GeometryError("build_cloud: no frames");
  ColoredPointCloud all;
  for (const auto& f : frames) {
    auto c = back_project(f);
    all.positions.insert(all.positions.end(), c.positions.begin(), c.positions.end());
    all.colors.insert(all.colors.end(), c.colors.begin(), c.colors.end());
  }
  if (all.empty()) throw GeometryError("build_cloud: no valid depth in any frame");
  if (all.size() <= target_count) return all;
  return all.subset(sample_without_replacement(all.size(), target_count, seed));
}

void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << fmt17(k.fx) << ' ' << fmt17(k.fy) << ' ' << fmt17(k.cx) << ' ' << fmt17(k.cy) << ' ' << k.width << ' '
      << k.height << '\n';
}

CameraIntrinsics read_intrinsics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CameraIntrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
    throw GeometryError(path.string() + ": expected 'fx fy cx cy width height'");
  }
  k.validate();
  return k;
}

void write_pose(const std::filesystem::path& path, const Pose& pose) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const Mat4 m = pose.matrix();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out << (c ? " " : "") << fmt17(m(r, c));
    out << '\n';
  }
}

Pose read_pose(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (!(in >> m(r, c))) throw GeometryError(path.string() + ": expected a 4x4 matrix");
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
    throw GeometryError(path.string() + ": last row of a rigid transform must be 0 0 0 1");
  }
  Pose p = Pose::from_matrix(m);
  p.validate();
  return p;
}

}  // namespace pcnr
