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

// Point encoder and hierarchical feature volume.
//
// Grid layout: a level of resolution n over box B has n^3 cells; cell (i, j, k)
// is centered at B.min + (i + 0.5, j + 0.5, k + 0.5) * cell_size and its
// features live at flat offset ((i * n + j) * n + k) * C. Trilinear queries
// interpolate between cell centers; between the outermost centers and the box
// wall the query clamps to the boundary layer.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pcnr/camera.hpp"
#include "pcnr/mlp.hpp"
#include "pcnr/tensor.hpp"

namespace pcnr {

struct MaskResult {
  ColoredPointCloud cloud;
  /// Indices into the input cloud of the surviving points, ascending.
  std::vector<std::size_t> kept;
  /// Set when the cloud was smaller than one group and was returned unchanged.
  bool too_small = false;
  std::size_t groups = 0;
  std::size_t dropped_groups = 0;
};

/// Greedy farthest-point sampling starting from `start`; ties go to the lower index.
std::vector<std::size_t> farthest_point_sample(const std::vector<Vec3>& points, std::size_t count,
                                               std::size_t start);
/// The k points nearest to `center` (ties by index), nearest first.
std::vector<std::size_t> nearest_neighbors(const std::vector<Vec3>& points, const Vec3& center, std::size_t k);

/// Group masking: min(group_count, M) farthest-point centers, each grouping
/// its group_size nearest points; floor(ratio * groups) groups are dropped at
/// random. A point is removed when it belongs to a dropped group and to no
/// surviving group. Surviving points are copied unchanged, in input order.
MaskResult mask_points(const ColoredPointCloud& cloud, std::size_t group_count, std::size_t group_size,
                       double ratio, std::uint64_t seed);

/// Shared per-point MLP over (position normalized to the box, rgb).
class PointEncoder {
 public:
  PointEncoder() = default;
  PointEncoder(std::size_t channels, std::size_t hidden, Rng& rng);

  /// [M, channels] embeddings.
  Tensor encode(const ColoredPointCloud& cloud, const Aabb& box) const;
  std::size_t channels() const { return channels_; }
  void collect(std::vector<NamedTensor>& out) const { mlp_.collect("encoder", out); }

 private:
  Mlp mlp_;
  std::size_t channels_ = 0;
};

struct VolumeLevel {
  std::size_t resolution = 0;
  Tensor grid;  // [n, n, n, C]
  std::vector<std::uint8_t> occupied;
  std::vector<std::uint32_t> counts;

  std::size_t cells() const { return resolution * resolution * resolution; }
};

struct FeatureVolumePyramid {
  Aabb box;
  std::size_t channels = 0;
  std::vector<VolumeLevel> levels;

  std::size_t feature_dim() const { return channels * levels.size(); }
};

/// Index of the cell containing p at the given resolution (p within the box).
std::size_t cell_of(const Aabb& box, std::size_t resolution, const Vec3& p);

/// Average pooling of point embeddings into every level. Throws GeometryError
/// for a point outside the box (1e-9 slack) or for non-ascending resolutions.
FeatureVolumePyramid pool_to_pyramid(const ColoredPointCloud& cloud, const Tensor& embeddings,
                                     const std::vector<std::size_t>& resolutions, const Aabb& box);

/// out = in + tanh(conv3x3x3(in) + bias), zero padding, one kernel per level.
///
/// Cells outside the occupancy mask are structural zeros of the pooled input:
/// the convolution reads them as zero and no gradient is propagated to them
/// through the convolution (the residual path still passes its gradient).
Tensor dense_fill_conv(const Tensor& grid, const std::vector<std::uint8_t>& occupied, const Tensor& kernel,
                       const Tensor& bias);

class DenseFill {
 public:
  DenseFill() = default;
  /// Small random kernels (scaled by `kernel_scale`) and zero biases.
  DenseFill(std::size_t levels, std::size_t channels, Rng& rng, double kernel_scale = 0.05);

  FeatureVolumePyramid apply(const FeatureVolumePyramid& pooled) const;
  void collect(std::vector<NamedTensor>& out) const;

  std::vector<Tensor>& kernels() { return kernels_; }  // each [27, C, C]
  std::vector<Tensor>& biases() { return biases_; }    // each [C]

 private:
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
};

/// Trilinear features of every level at every point, concatenated by level:
/// [P, 3] -> [P, levels * C]. Differentiable with respect to the grids and the
/// points. Throws GeometryError for a point outside the box beyond 1e-9.
Tensor query_features(const FeatureVolumePyramid& pyramid, const Tensor& points);

}  // namespace pcnr
