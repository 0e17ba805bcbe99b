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

#include "pcnr/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "pcnr/config.hpp"

namespace pcnr {

namespace {

constexpr double kTraceEpsilon = 1e-6;
constexpr int kMaxTraceSteps = 2048;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Vec3 vec(const std::vector<double>& v, std::size_t at) { return {v[at], v[at + 1], v[at + 2]}; }

}  // namespace

double primitive_sdf(const Primitive& prim, const Vec3& p) {
  struct Visitor {
    const Vec3& p;
    double operator()(const Sphere& s) const { return (p - s.center).norm() - s.radius; }
    double operator()(const Box& b) const {
      const Vec3 q = (p - b.center).cwiseAbs() - b.half_extents;
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    double operator()(const HalfSpace& h) const { return h.normal.dot(p) - h.offset; }
  };
  return std::visit(Visitor{p}, prim.shape);
}

void AnalyticScene::validate() const {
  if (!((box.max.array() > box.min.array()).all())) throw GeometryError("scene: box_min must be below box_max");
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const auto& prim = primitives[i];
    if (!((prim.albedo.array() >= 0.0).all() && (prim.albedo.array() <= 1.0).all())) {
      throw GeometryError("scene: primitive " + std::to_string(i) + " albedo outside [0, 1]");
    }
    bool reaches = false;
    if (const auto* s = std::get_if<Sphere>(&prim.shape)) {
      if (!(s->radius > 0.0)) throw GeometryError("scene: sphere radius must be positive");
      const Vec3 nearest = s->center.cwiseMax(box.min).cwiseMin(box.max);
      reaches = (nearest - s->center).norm() <= s->radius;
    } else if (const auto* b = std::get_if<Box>(&prim.shape)) {
      if (!((b->half_extents.array() > 0.0).all())) throw GeometryError("scene: box half-extents must be positive");
      reaches = ((b->center - b->half_extents).array() <= box.max.array()).all() &&
                ((b->center + b->half_extents).array() >= box.min.array()).all();
    } else {
      const auto& h = std::get<HalfSpace>(prim.shape);
      if (std::abs(h.normal.norm() - 1.0) > 1e-9) throw GeometryError("scene: plane normal must be unit length");
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (int c = 0; c < 8; ++c) {
        const Vec3 corner((c & 1) ? box.max.x() : box.min.x(), (c & 2) ? box.max.y() : box.min.y(),
                          (c & 4) ? box.max.z() : box.min.z());
        const double d = h.normal.dot(corner) - h.offset;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
      reaches = lo <= 0.0 && hi >= 0.0;
    }
    if (!reaches) throw GeometryError("scene: primitive " + std::to_string(i) + " does not intersect the scene box");
  }
}

double sdf_eval(const AnalyticScene& scene, const Vec3& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& prim : scene.primitives) d = std::min(d, primitive_sdf(prim, p));
  return d;
}

std::size_t nearest_primitive(const AnalyticScene& scene, const Vec3& p) {
  std::size_t best = 0;
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const double di = primitive_sdf(scene.primitives[i], p);
    if (di < d) {
      d = di;
      best = i;
    }
  }
  return best;
}

Vec3 albedo_at(const AnalyticScene& scene, const Vec3& p) {
  if (scene.primitives.empty()) return Vec3::Zero();
  return scene.primitives[nearest_primitive(scene, p)].albedo;
}

std::optional<double> sphere_trace(const AnalyticScene& scene, const Ray& ray) {
  if (scene.primitives.empty()) return std::nullopt;
  double t = std::max(ray.z_near, 0.0);
  for (int step = 0; step < kMaxTraceSteps && t <= ray.z_far; ++step) {
    const double d = sdf_eval(scene, ray.at(t));
    if (d < kTraceEpsilon) {
      // Bracket the crossing, then bisect. A ray that only grazes the
      // surface never goes negative; keep the marched length then.
      if (d < 0.0 && t <= std::max(ray.z_near, 0.0)) return std::nullopt;  // origin inside geometry
      double lo = t;
      double hi = t;
      double probe = 1e-6;
      bool bracketed = d < 0.0;
      if (bracketed) lo = t - probe;
      while (!bracketed && probe < 1e-3) {
        hi = t + probe;
        bracketed = sdf_eval(scene, ray.at(hi)) < 0.0;
        probe *= 2.0;
      }
      if (!bracketed) return t > 0.0 ? std::optional<double>(t) : std::nullopt;
      for (int i = 0; i < 80 && hi - lo > 0.0; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (sdf_eval(scene, ray.at(mid)) < 0.0 ? hi : lo) = mid;
      }
      const double hit = 0.5 * (lo + hi);
      if (hit <= 0.0 || hit > ray.z_far) return std::nullopt;
      return hit;
    }
    t += d;
  }
  return std::nullopt;
}

RgbdFrame render_frame(const AnalyticScene& scene, const CameraIntrinsics& k, const Pose& pose) {
  RgbdFrame frame;
  frame.intrinsics = k;
  frame.pose = pose;
  frame.color = ColorImage(k.width, k.height);
  frame.depth = DepthImage(k.width, k.height);
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      Ray ray = generate_ray(u, v, k, pose);
      const auto bounds = ray_aabb(ray, scene.box);
      if (!bounds) continue;
      ray.z_near = bounds->first;
      ray.z_far = bounds->second;
      const auto hit = sphere_trace(scene, ray);
      if (!hit) continue;
      frame.depth.at(u, v) = *hit;
      const Vec3 a = albedo_at(scene, ray.at(*hit));
      for (int c = 0; c < 3; ++c) frame.color.at(u, v, c) = a[c];
    }
  }
  return frame;
}

AnalyticScene parse_scene(const std::string& text, const std::string& source) {
  AnalyticScene scene;
  bool have_version = false;
  bool have_min = false;
  bool have_max = false;
  for (const auto& kv : parse_key_values(text, source)) {
    const std::string at = source + ":" + std::to_string(kv.line);
    if (kv.key == "version") {
      if (parse_integer(kv, source) != 1) throw ConfigError(at + ": unsupported scene version '" + kv.value + "'");
      have_version = true;
    } else if (kv.key == "box_min") {
      scene.box.min = vec(parse_numbers(kv, source, 3), 0);
      have_min = true;
    } else if (kv.key == "box_max") {
      scene.box.max = vec(parse_numbers(kv, source, 3), 0);
      have_max = true;
    } else if (kv.key == "sphere") {
      const auto v = parse_numbers(kv, source, 7);
      scene.primitives.push_back({Sphere{vec(v, 0), v[3]}, vec(v, 4)});
    } else if (kv.key == "box") {
      const auto v = parse_numbers(kv, source, 9);
      scene.primitives.push_back({Box{vec(v, 0), vec(v, 3)}, vec(v, 6)});
    } else if (kv.key == "plane") {
      const auto v = parse_numbers(kv, source, 7);
      scene.primitives.push_back({HalfSpace{vec(v, 0), v[3]}, vec(v, 4)});
    } else {
      throw ConfigError(at + ": unknown scene key '" + kv.key + "'");
    }
  }
  if (!have_version) throw ConfigError(source + ": missing 'version = 1'");
  if (!have_min || !have_max) throw ConfigError(source + ": missing box_min / box_max");
  if (scene.primitives.empty()) throw ConfigError(source + ": no primitives");
  try {
    scene.validate();
  } catch (const GeometryError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return scene;
}

AnalyticScene read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scene(text.str(), path.string());
}

std::string format_scene(const AnalyticScene& scene) {
  std::ostringstream os;
  auto v3 = [](const Vec3& v) { return fmt17(v.x()) + " " + fmt17(v.y()) + " " + fmt17(v.z()); };
  os << "version = 1\n";
  os << "box_min = " << v3(scene.box.min) << "\n";
  os << "box_max = " << v3(scene.box.max) << "\n";
  for (const auto& prim : scene.primitives) {
    if (const auto* s = std::get_if<Sphere>(&prim.shape)) {
      os << "sphere = " << v3(s->center) << " " << fmt17(s->radius);
    } else if (const auto* b = std::get_if<Box>(&prim.shape)) {
      os << "box = " << v3(b->center) << " " << v3(b->half_extents);
    } else {
      const auto& h = std::get<HalfSpace>(prim.shape);
      os << "plane = " << v3(h.normal) << " " << fmt17(h.offset);
    }
    os << " " << v3(prim.albedo) << "\n";
  }
  return os.str();
}

Trajectory parse_trajectory(const std::string& text, const std::string& source) {
  Trajectory t;
  for (const auto& kv : parse_key_values(text, source)) {
    if (kv.key == "views") t.views = static_cast<int>(parse_integer(kv, source));
    else if (kv.key == "radius") t.radius = parse_number(kv, source);
    else if (kv.key == "elevation") t.elevation_deg = parse_number(kv, source);
    else if (kv.key == "elevation_swing") t.elevation_swing_deg = parse_number(kv, source);
    else if (kv.key == "azimuth0") t.azimuth0_deg = parse_number(kv, source);
    else if (kv.key == "width") t.width = static_cast<int>(parse_integer(kv, source));
    else if (kv.key == "height") t.height = static_cast<int>(parse_integer(kv, source));
    else if (kv.key == "focal") t.focal = parse_number(kv, source);
    else throw ConfigError(source + ":" + std::to_string(kv.line) + ": unknown trajectory key '" + kv.key + "'");
  }
  if (t.views < 1 || t.width < 1 || t.height < 1 || !(t.radius > 0.0) || !(t.focal > 0.0)) {
    throw ConfigError(source + ": views, width, height, radius and focal must be positive");
  }
  return t;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_trajectory(text.str(), path.string());
}

CameraIntrinsics trajectory_intrinsics(const Trajectory& t) {
  CameraIntrinsics k;
  k.fx = k.fy = t.focal;
  k.cx = 0.5 * t.width;
  k.cy = 0.5 * t.height;
  k.width = t.width;
  k.height = t.height;
  k.validate();
  return k;
}

std::vector<Pose> ring_poses(const Aabb& box, const Trajectory& t) {
  std::vector<Pose> poses;
  const Vec3 target = box.center();
  constexpr double kDeg = std::numbers::pi / 180.0;
  for (int i = 0; i < t.views; ++i) {
    const double az = (t.azimuth0_deg + 360.0 * i / t.views) * kDeg;
    const double el = (t.elevation_deg + (i % 2 ? -1.0 : 1.0) * t.elevation_swing_deg) * kDeg;
    const Vec3 eye = target + t.radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    poses.push_back(look_at(eye, target, Vec3::UnitZ()));
  }
  return poses;
}

std::string frame_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03zu", index);
  return buf;
}

void write_dataset(const std::filesystem::path& dir, const AnalyticScene& scene, const CameraIntrinsics& k,
                   const std::vector<Pose>& poses) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "scene.txt", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "scene.txt").string());
    out << format_scene(scene);
  }
  write_intrinsics(dir / "intrinsics.txt", k);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const RgbdFrame frame = render_frame(scene, k, poses[i]);
    const std::string stem = frame_stem(i);
    write_ppm(dir / (stem + ".ppm"), frame.color);
    write_pfm(dir / (stem + ".pfm"), frame.depth);
    write_pose(dir / (stem + ".pose.txt"), poses[i]);
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("dataset directory not found: " + dir.string());
  Dataset data;
  data.scene = read_scene(dir / "scene.txt");
  try {
    data.intrinsics = read_intrinsics(dir / "intrinsics.txt");
  } catch (const std::exception& e) {
    throw ConfigError((dir / "intrinsics.txt").string() + ": " + e.what());
  }
  for (std::size_t i = 0;; ++i) {
    const std::string stem = frame_stem(i);
    const auto ppm = dir / (stem + ".ppm");
    if (!std::filesystem::exists(ppm)) break;
    RgbdFrame frame;
    frame.intrinsics = data.intrinsics;
    auto load = [&](const std::filesystem::path& p, auto&& fn) {
      try {
        fn();
      } catch (const std::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
      }
    };
    load(ppm, [&] { frame.color = read_ppm(ppm); });
    load(dir / (stem + ".pfm"), [&] { frame.depth = read_pfm(dir / (stem + ".pfm")); });
    load(dir / (stem + ".pose.txt"), [&] { frame.pose = read_pose(dir / (stem + ".pose.txt")); });
    load(ppm, [&] { frame.validate(); });
    data.frames.push_back(std::move(frame));
  }
  if (data.frames.empty()) throw ConfigError(dir.string() + ": no frame_000.ppm found");
  return data;
}

AnalyticScene two_primitive_scene() {
  AnalyticScene scene;
  scene.box = Aabb{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  scene.primitives.push_back({Sphere{Vec3(0.3, 0.2, 0.05), 0.42}, Vec3(0.9, 0.35, 0.2)});
  scene.primitives.push_back({Box{Vec3(-0.35, -0.3, -0.1), Vec3(0.3, 0.3, 0.4)}, Vec3(0.2, 0.55, 0.85)});
  scene.validate();
  return scene;
}

}  // namespace pcnr
