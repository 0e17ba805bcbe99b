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

// Dense SDF sampling, marching cubes, point-set distance and OBJ files.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pcnr/camera.hpp"
#include "pcnr/neural_field.hpp"
#include "pcnr/scene.hpp"

namespace pcnr {

/// Values at the nodes of a regular lattice spanning `box`, node (i, j, k) at
/// flat index (i * ny + j) * nz + k.
struct SdfGrid {
  std::array<std::size_t, 3> resolution{0, 0, 0};
  Aabb box;
  std::vector<double> values;

  Vec3 spacing() const;
  Vec3 node(std::size_t i, std::size_t j, std::size_t k) const;
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * resolution[1] + j) * resolution[2] + k;
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return values[index(i, j, k)]; }
};

/// Evaluates `f` at every node; resolution >= 2 per axis.
SdfGrid sample_grid(const std::function<double(const Vec3&)>& f, const Aabb& box,
                    const std::array<std::size_t, 3>& resolution);
/// Field SDF at every node, evaluated in batches without recording gradients.
SdfGrid sample_sdf_grid(const FieldModel& field, const FeatureVolumePyramid* pyramid, const Aabb& box,
                        const std::array<std::size_t, 3>& resolution);

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> triangles;
};

/// Table-driven isosurface; nodes with value < iso are inside. Vertices on a
/// shared lattice edge are emitted once; triangles with area below 1e-12 are dropped.
TriangleMesh marching_cubes(const SdfGrid& grid, double iso = 0.0);

/// Symmetric chamfer distance: the mean of the two directed mean
/// nearest-neighbor distances. Throws std::invalid_argument on an empty set.
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

std::string format_obj(const TriangleMesh& mesh);
TriangleMesh parse_obj(const std::string& text, const std::string& source = "<obj>");
void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh read_obj(const std::filesystem::path& path);

/// Points on the visible scene surface inside the box: area-weighted draws on
/// sphere and box primitives (planes by projecting box samples), keeping only
/// points that no other primitive covers.
std::vector<Vec3> sample_surface(const AnalyticScene& scene, std::size_t count, std::uint64_t seed);

}  // namespace pcnr
