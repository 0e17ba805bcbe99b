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


#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "pcnr/camera.hpp"
#include "pcnr/rng.hpp"

namespace pcnr {
namespace {

RgbdFrame flat_frame(int w, int h, double depth, const CameraIntrinsics& k, const Pose& pose) {
  RgbdFrame f;
  f.color = ColorImage(w, h);
  f.depth = DepthImage(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      f.depth.at(x, y) = depth + 0.01 * (x + 2 * y);
      for (int c = 0; c < 3; ++c) f.color.at(x, y, c) = (x + y + c) / double(w + h + 3);
    }
  }
  f.intrinsics = k;
  f.pose = pose;
  return f;
}

CameraIntrinsics small_intrinsics() { return {40.0, 42.0, 15.5, 11.0, 32, 24}; }

Pose tilted_pose() {
  const Mat3 r = (Eigen::AngleAxisd(0.3, Vec3::UnitX()) * Eigen::AngleAxisd(-0.7, Vec3::UnitY()) *
                  Eigen::AngleAxisd(0.2, Vec3::UnitZ()))
                     .toRotationMatrix();
  Pose p;
  p.rotation = r;
  p.translation = Vec3(0.3, -0.2, 2.5);
  return p;
}

TEST(Camera, PrincipalPixelBackProjectsOntoAxis) {
  const CameraIntrinsics k{50, 50, 16, 12, 32, 24};
  const Vec3 p = back_project_pixel(16, 12, 1.0, k, Pose::identity());
  EXPECT_NEAR((p - Vec3(0, 0, 1)).norm(), 0.0, 1e-15);
}

TEST(Camera, ProjectionRoundTripsEveryPixel) {
  const auto k = small_intrinsics();
  const RgbdFrame f = flat_frame(k.width, k.height, 2.0, k, tilted_pose());
  const auto cloud = back_project(f);
  ASSERT_EQ(cloud.size(), static_cast<std::size_t>(k.width * k.height));
  std::size_t i = 0;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u, ++i) {
      const auto pr = project(cloud.positions[i], k, f.pose);
      EXPECT_NEAR(pr.u, u, 1e-9);
      EXPECT_NEAR(pr.v, v, 1e-9);
      EXPECT_NEAR(pr.depth, f.depth.at(u, v), 1e-9);
      EXPECT_EQ(cloud.colors[i].x(), f.color.at(u, v, 0));
    }
  }
}

TEST(Camera, BackProjectionMatchesHomogeneousMatrixOracle) {
  const CameraIntrinsics k{1.0, 1.0, 0.5, 0.5, 2, 2};
  Pose pose;
  pose.rotation = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix();
  pose.translation = Vec3(1, 0, 0);
  RgbdFrame f = flat_frame(2, 2, 1.5, k, pose);
  f.depth.at(1, 0) = 0.0;

  Eigen::Matrix4d world_to_cam = Eigen::Matrix4d::Identity();
  world_to_cam.block<3, 3>(0, 0) << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  world_to_cam.block<3, 1>(0, 3) << 1, 0, 0;
  const Eigen::Matrix4d cam_to_world = world_to_cam.inverse();
  Eigen::Matrix3d kinv;
  kinv << 1, 0, -0.5, 0, 1, -0.5, 0, 0, 1;

  const auto cloud = back_project(f);
  ASSERT_EQ(cloud.size(), 3u);
  std::size_t i = 0;
  for (int v = 0; v < 2; ++v) {
    for (int u = 0; u < 2; ++u) {
      if (f.depth.at(u, v) == 0.0) continue;
      const Eigen::Vector3d r = kinv * Eigen::Vector3d(u, v, 1);
      Eigen::Vector4d cam;
      cam << r.normalized() * f.depth.at(u, v), 1.0;
      const Eigen::Vector4d world = cam_to_world * cam;
      EXPECT_NEAR((cloud.positions[i] - world.head<3>()).norm(), 0.0, 1e-12) << u << "," << v;
      ++i;
    }
  }
}

TEST(Camera, AllInvalidDepthGivesEmptyCloud) {
  const auto k = small_intrinsics();
  RgbdFrame f = flat_frame(k.width, k.height, 0.0, k, Pose::identity());
  std::fill(f.depth.depth.begin(), f.depth.depth.end(), 0.0);
  EXPECT_TRUE(back_project(f).empty());
}

TEST(Camera, PrincipalRayPointsAlongZ) {
  const CameraIntrinsics k{50, 50, 16, 12, 32, 24};
  const Ray r = generate_ray(16, 12, k, Pose::identity());
  EXPECT_NEAR((r.direction - Vec3::UnitZ()).norm(), 0.0, 1e-15);
  EXPECT_NEAR(r.origin.norm(), 0.0, 1e-15);
}

TEST(Camera, RayDirectionsAreUnitAndMatchOracle) {
  const auto k = small_intrinsics();
  const Pose pose = tilted_pose();
  Eigen::Matrix3d kmat;
  kmat << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
  const Eigen::Matrix3d rinv = pose.rotation.inverse();
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Ray r = generate_ray(u, v, k, pose);
      EXPECT_NEAR(r.direction.norm(), 1.0, 1e-12);
      if ((u == 0 || u == k.width - 1) && (v == 0 || v == k.height - 1)) {
        const Eigen::Vector3d oracle = (rinv * kmat.inverse() * Eigen::Vector3d(u, v, 1)).normalized();
        EXPECT_NEAR((r.direction - oracle).norm(), 0.0, 1e-12);
      }
    }
  }
  const Ray r = generate_ray(0, 0, k, pose);
  EXPECT_NEAR((r.origin - (-pose.rotation.transpose() * pose.translation)).norm(), 0.0, 1e-12);
}

TEST(Camera, RayBoxAxisAlignedHit) {
  const Aabb box;
  const auto hit = ray_aabb({Vec3(-2, 0, 0), Vec3(1, 0, 0)}, box);
  ASSERT_TRUE(hit);
  EXPECT_DOUBLE_EQ(hit->first, 1.0);
  EXPECT_DOUBLE_EQ(hit->second, 3.0);
}

TEST(Camera, RayBoxInteriorOrigin) {
  const auto hit = ray_aabb({Vec3(0, 0, 0), Vec3(0, 0, 1)}, Aabb{});
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->first, 0.0);
  EXPECT_DOUBLE_EQ(hit->second, 1.0);
}

TEST(Camera, RayBoxMiss) { EXPECT_FALSE(ray_aabb({Vec3(-2, 2, 0), Vec3(1, 0, 0)}, Aabb{})); }

TEST(Camera, RayBoxEndpointsLieOnSurface) {
  Rng rng(21);
  const Aabb box{Vec3(-1, -0.5, -2), Vec3(1.5, 0.5, 1)};
  int hits = 0;
  for (int i = 0; i < 2000; ++i) {
    Ray ray;
    ray.origin = Vec3(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4));
    ray.direction = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const auto hit = ray_aabb(ray, box);
    if (!hit) continue;
    ++hits;
    EXPECT_LE(hit->first, hit->second);
    for (double t : {hit->first, hit->second}) {
      const Vec3 p = ray.at(t);
      if (t == 0.0 && box.contains(ray.origin)) continue;
      const Vec3 lo = p - box.min;
      const Vec3 hi = box.max - p;
      const double wall = std::min(lo.cwiseAbs().minCoeff(), hi.cwiseAbs().minCoeff());
      EXPECT_LT(wall, 1e-9);
      EXPECT_TRUE(box.contains(p, 1e-9));
    }
  }
  EXPECT_GT(hits, 100);
}

TEST(Camera, IntrinsicsAndPoseValidation) {
  EXPECT_THROW((CameraIntrinsics{-1, 1, 0, 0, 4, 4}.validate()), GeometryError);
  EXPECT_THROW((CameraIntrinsics{1, 1, 4, 0, 4, 4}.validate()), GeometryError);
  EXPECT_NO_THROW(small_intrinsics().validate());
  Pose p;
  p.rotation(0, 0) = -1;
  EXPECT_THROW(p.validate(), GeometryError);
  p.rotation(0, 0) = 1.1;
  EXPECT_THROW(p.validate(), GeometryError);
  EXPECT_NO_THROW(tilted_pose().validate());
}

TEST(Camera, FrameValidation) {
  const auto k = small_intrinsics();
  RgbdFrame f = flat_frame(k.width, k.height, 1.0, k, Pose::identity());
  EXPECT_NO_THROW(f.validate());
  f.depth.at(0, 0) = -1;
  EXPECT_THROW(f.validate(), GeometryError);
  f.depth.at(0, 0) = 1;
  f.color.at(1, 1, 2) = 1.5;
  EXPECT_THROW(f.validate(), GeometryError);
}

TEST(Camera, BuildCloudSingleFrameIsIdentityUnion) {
  const auto k = small_intrinsics();
  const RgbdFrame f = flat_frame(k.width, k.height, 2.0, k, tilted_pose());
  const auto direct = back_project(f);
  const auto cloud = build_cloud({f}, 100000, 1);
  ASSERT_EQ(cloud.size(), direct.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_EQ(cloud.positions[i], direct.positions[i]);
}

TEST(Camera, BuildCloudBoundsAreUnionOfFrameBounds) {
  const auto k = small_intrinsics();
  const RgbdFrame a = flat_frame(k.width, k.height, 2.0, k, tilted_pose());
  const RgbdFrame b = flat_frame(k.width, k.height, 2.2, k, Pose::identity());
  const Aabb ba = back_project(a).bounds();
  const Aabb bb = back_project(b).bounds();
  const Aabb merged = build_cloud({a, b}, 100000, 1).bounds();
  EXPECT_EQ(merged.min, ba.min.cwiseMin(bb.min));
  EXPECT_EQ(merged.max, ba.max.cwiseMax(bb.max));
}

TEST(Camera, BuildCloudRejectsNoValidPoints) {
  const auto k = small_intrinsics();
  RgbdFrame f = flat_frame(k.width, k.height, 1.0, k, Pose::identity());
  std::fill(f.depth.depth.begin(), f.depth.depth.end(), 0.0);
  EXPECT_THROW(build_cloud({f}, 10, 0), GeometryError);
  EXPECT_THROW(build_cloud({}, 10, 0), GeometryError);
}

TEST(Camera, StandardEngineTrace) {
  std::mt19937_64 e;
  e.discard(9999);
  EXPECT_EQ(e(), 9981545732273789042ULL);
  Rng rng(5489);
  for (int i = 0; i < 9999; ++i) rng.next_u64();
  EXPECT_EQ(rng.next_u64(), 9981545732273789042ULL);
}

TEST(Camera, DownsampleIndexSetMatchesRngTrace) {
  const int w = 100, h = 50;
  const CameraIntrinsics k{60, 60, 50, 25, w, h};
  const RgbdFrame f = flat_frame(w, h, 2.0, k, Pose::identity());
  const auto all = back_project(f);
  ASSERT_EQ(all.size(), 5000u);

  std::mt19937_64 engine(7);
  std::vector<std::size_t> idx(5000);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < 1000; ++i) {
    const std::uint64_t n = 5000 - i;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine();
    while (x >= limit) x = engine();
    std::swap(idx[i], idx[i + x % n]);
  }
  std::set<std::size_t> oracle(idx.begin(), idx.begin() + 1000);

  const auto cloud = build_cloud({f}, 1000, 7);
  ASSERT_EQ(cloud.size(), 1000u);
  std::size_t j = 0;
  for (std::size_t i : oracle) EXPECT_EQ(cloud.positions[j++], all.positions[i]);
  EXPECT_EQ(build_cloud({f}, 1000, 7).positions, cloud.positions);
}

TEST(Camera, IntrinsicsAndPoseFilesRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "pcnr_camera_test";
  std::filesystem::create_directories(dir);
  const auto k = small_intrinsics();
  write_intrinsics(dir / "k.txt", k);
  const auto k2 = read_intrinsics(dir / "k.txt");
  EXPECT_EQ(k2.fx, k.fx);
  EXPECT_EQ(k2.cy, k.cy);
  EXPECT_EQ(k2.width, k.width);
  const Pose p = tilted_pose();
  write_pose(dir / "p.txt", p);
  const Pose p2 = read_pose(dir / "p.txt");
  EXPECT_EQ(p2.rotation, p.rotation);
  EXPECT_EQ(p2.translation, p.translation);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace pcnr
