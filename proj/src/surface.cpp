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

#include "pcnr/surface.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "mc_tables.hpp"
#include "pcnr/config.hpp"

namespace pcnr {

Vec3 SdfGrid::spacing() const {
  const Vec3 ext = box.extent();
  return {ext.x() / static_cast<double>(resolution[0] - 1), ext.y() / static_cast<double>(resolution[1] - 1),
          ext.z() / static_cast<double>(resolution[2] - 1)};
}

Vec3 SdfGrid::node(std::size_t i, std::size_t j, std::size_t k) const {
  const Vec3 h = spacing();
  return box.min + Vec3(static_cast<double>(i) * h.x(), static_cast<double>(j) * h.y(), static_cast<double>(k) * h.z());
}

SdfGrid sample_grid(const std::function<double(const Vec3&)>& f, const Aabb& box,
                    const std::array<std::size_t, 3>& resolution) {
  for (std::size_t n : resolution)
    if (n < 2) throw std::invalid_argument("grid resolution must be at least 2 per axis");
  SdfGrid g{resolution, box, {}};
  g.values.resize(resolution[0] * resolution[1] * resolution[2]);
  for (std::size_t i = 0; i < resolution[0]; ++i)
    for (std::size_t j = 0; j < resolution[1]; ++j)
      for (std::size_t k = 0; k < resolution[2]; ++k) g.values[g.index(i, j, k)] = f(g.node(i, j, k));
  return g;
}

SdfGrid sample_sdf_grid(const FieldModel& field, const FeatureVolumePyramid* pyramid, const Aabb& box,
                        const std::array<std::size_t, 3>& resolution) {
  for (std::size_t n : resolution)
    if (n < 2) throw std::invalid_argument("grid resolution must be at least 2 per axis");
  SdfGrid g{resolution, box, {}};
  const std::size_t total = resolution[0] * resolution[1] * resolution[2];
  g.values.resize(total);
  NoGradGuard no_grad;
  constexpr std::size_t kBatch = 8192;
  std::vector<double> pts;
  for (std::size_t start = 0; start < total; start += kBatch) {
    const std::size_t count = std::min(kBatch, total - start);
    pts.clear();
    for (std::size_t f = start; f < start + count; ++f) {
      const std::size_t k = f % resolution[2];
      const std::size_t j = (f / resolution[2]) % resolution[1];
      const std::size_t i = f / (resolution[1] * resolution[2]);
      const Vec3 p = g.node(i, j, k);
      pts.insert(pts.end(), {p.x(), p.y(), p.z()});
    }
    const Tensor s = field.sdf(Tensor::from_values({count, 3}, pts), pyramid);
    std::copy(s.values().begin(), s.values().end(), g.values.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return g;
}

TriangleMesh marching_cubes(const SdfGrid& grid, double iso) {
  using namespace mc_tables;
  TriangleMesh mesh;
  const auto [nx, ny, nz] = grid.resolution;
  if (grid.values.size() != nx * ny * nz) throw std::invalid_argument("marching_cubes: grid size mismatch");
  for (double v : grid.values)
    if (!std::isfinite(v)) throw std::invalid_argument("marching_cubes: grid holds a non-finite value");
  // Lattice edge key: node index * 3 + axis of the edge leaving that node.
  std::unordered_map<std::size_t, std::size_t> edge_vertex;
  auto vertex_on = [&](std::size_t i, std::size_t j, std::size_t k, int c0, int c1) {
    const int* o0 = kCornerOffset[c0];
    const int* o1 = kCornerOffset[c1];
    int axis = 0;
    while (o0[axis] == o1[axis]) ++axis;
    const int* lo = o0[axis] < o1[axis] ? o0 : o1;
    const std::size_t a = grid.index(i + lo[0], j + lo[1], k + lo[2]);
    const std::size_t key = a * 3 + static_cast<std::size_t>(axis);
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const std::size_t b = grid.index(i + lo[0] + (axis == 0), j + lo[1] + (axis == 1), k + lo[2] + (axis == 2));
    const double va = grid.values[a];
    const double vb = grid.values[b];
    const double t = (iso - va) / (vb - va);
    const Vec3 pa = grid.node(i + lo[0], j + lo[1], k + lo[2]);
    Vec3 pb = pa;
    pb[axis] = grid.node(i + lo[0] + (axis == 0), j + lo[1] + (axis == 1), k + lo[2] + (axis == 2))[axis];
    mesh.vertices.push_back(pa + t * (pb - pa));
    edge_vertex.emplace(key, mesh.vertices.size() - 1);
    return mesh.vertices.size() - 1;
  };

  for (std::size_t i = 0; i + 1 < nx; ++i) {
    for (std::size_t j = 0; j + 1 < ny; ++j) {
      for (std::size_t k = 0; k + 1 < nz; ++k) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const int* o = kCornerOffset[c];
          if (grid.at(i + o[0], j + o[1], k + o[2]) < iso) cube |= 1 << c;
        }
        if (kEdgeTable[cube] == 0) continue;
        for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
          std::array<std::size_t, 3> tri{};
          for (int v = 0; v < 3; ++v) {
            const int e = kTriTable[cube][t + v];
            tri[v] = vertex_on(i, j, k, kEdgeCorners[e][0], kEdgeCorners[e][1]);
          }
          const Vec3& a = mesh.vertices[tri[0]];
          const double area = 0.5 * (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a).norm();
          if (area < 1e-12) continue;
          mesh.triangles.push_back(tri);
        }
      }
    }
  }
  return mesh;
}

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: point sets must be nonempty");
  auto directed = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double total = 0.0;
    for (const Vec3& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : to) best = std::min(best, (p - q).squaredNorm());
      total += std::sqrt(best);
    }
    return total / static_cast<double>(from.size());
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

std::string format_obj(const TriangleMesh& mesh) {
  std::string out;
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out += buf;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(buf, sizeof buf, "f %zu %zu %zu\n", t[0] + 1, t[1] + 1, t[2] + 1);
    out += buf;
  }
  return out;
}

TriangleMesh parse_obj(const std::string& text, const std::string& source) {
  TriangleMesh mesh;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::array<long long, 3>> faces;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) throw ConfigError(where + ": malformed vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<long long, 3> f{};
      for (auto& idx : f) {
        std::string tok;
        if (!(ls >> tok)) throw ConfigError(where + ": face needs three vertices");
        idx = std::stoll(tok.substr(0, tok.find('/')));
      }
      std::string extra;
      if (ls >> extra) throw ConfigError(where + ": only triangular faces are supported");
      faces.push_back(f);
    } else {
      throw ConfigError(where + ": unsupported record '" + tag + "'");
    }
  }
  for (const auto& f : faces) {
    std::array<std::size_t, 3> t{};
    for (int v = 0; v < 3; ++v) {
      if (f[v] < 1 || static_cast<std::size_t>(f[v]) > mesh.vertices.size()) {
        throw ConfigError(source + ": face index " + std::to_string(f[v]) + " out of range");
      }
      t[v] = static_cast<std::size_t>(f[v] - 1);
    }
    mesh.triangles.push_back(t);
  }
  return mesh;
}

void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_obj(mesh);
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_obj(ss.str(), path.string());
}

std::vector<Vec3> sample_surface(const AnalyticScene& scene, std::size_t count, std::uint64_t seed) {
  std::vector<double> area;
  for (const auto& prim : scene.primitives) {
    if (const auto* s = std::get_if<Sphere>(&prim.shape)) {
      area.push_back(4.0 * std::numbers::pi * s->radius * s->radius);
    } else if (const auto* b = std::get_if<Box>(&prim.shape)) {
      const Vec3& h = b->half_extents;
      area.push_back(8.0 * (h.x() * h.y() + h.y() * h.z() + h.x() * h.z()));
    } else {
      area.push_back(scene.box.diagonal() * scene.box.diagonal() / 3.0);
    }
  }
  double total = 0.0;
  for (double a : area) total += a;
  if (total <= 0.0) throw GeometryError("sample_surface: scene has no surface");
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(count);
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 1000 * count + 1000) throw GeometryError("sample_surface: too little visible surface");
    double pick = rng.uniform() * total;
    std::size_t idx = 0;
    while (idx + 1 < area.size() && pick >= area[idx]) pick -= area[idx++];
    const auto& shape = scene.primitives[idx].shape;
    Vec3 p;
    if (const auto* s = std::get_if<Sphere>(&shape)) {
      Vec3 n(rng.normal(), rng.normal(), rng.normal());
      if (n.norm() < 1e-12) continue;
      p = s->center + s->radius * n.normalized();
    } else if (const auto* b = std::get_if<Box>(&shape)) {
      const Vec3& h = b->half_extents;
      const double faces[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
      double f = rng.uniform() * (faces[0] + faces[1] + faces[2]);
      int axis = 0;
      while (axis < 2 && f >= faces[axis]) f -= faces[axis++];
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      for (int a = 0; a < 3; ++a) p[a] = b->center[a] + (a == axis ? sign * h[a] : rng.uniform(-h[a], h[a]));
    } else {
      const auto& hs = std::get<HalfSpace>(shape);
      const Vec3 q(rng.uniform(scene.box.min.x(), scene.box.max.x()), rng.uniform(scene.box.min.y(), scene.box.max.y()),
                   rng.uniform(scene.box.min.z(), scene.box.max.z()));
      p = q - (hs.normal.dot(q) - hs.offset) * hs.normal;
    }
    if (!scene.box.contains(p)) continue;
    if (sdf_eval(scene, p) < -1e-9) continue;  // covered by another primitive
    out.push_back(p);
  }
  return out;
}

}  // namespace pcnr
