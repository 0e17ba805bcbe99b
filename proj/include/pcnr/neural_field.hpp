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

// Signed-distance scene field and its volume renderer.
//
// A field maps world points to a signed distance s and, with a view
// direction, to a color. Rendering samples each ray inside its bounds, turns
// the SDF samples into opacities
//
//   alpha_i = max((Phi(s_i) - Phi(s_{i+1})) / Phi(s_i), 0),  Phi(s) = sigmoid(h s)
//
// (the last sample gets alpha 0), accumulates transmittance
// T_i = prod_{j<i} (1 - alpha_j), and returns color sum T_i alpha_i c_i and
// depth sum T_i alpha_i z_i. Depth is not divided by the weight sum.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pcnr/camera.hpp"
#include "pcnr/feature_volume.hpp"
#include "pcnr/mlp.hpp"
#include "pcnr/scene.hpp"
#include "pcnr/tensor.hpp"

namespace pcnr {

/// [P, D] -> [P, D (1 + 2L)]. Each coordinate x expands in place to
/// x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{L-1} pi x), cos(2^{L-1} pi x).
Tensor positional_encode(const Tensor& x, std::size_t levels);
std::vector<double> positional_encode(std::span<const double> x, std::size_t levels);

/// Interface shared by the trainable field and the analytic stand-in.
class FieldModel {
 public:
  virtual ~FieldModel() = default;

  /// [P, 3] -> [P]
  virtual Tensor sdf(const Tensor& points, const FeatureVolumePyramid* pyramid) const = 0;

  struct Output {
    Tensor sdf;  // [P]
    Tensor rgb;  // [P, 3]
  };
  /// Both heads at once; `dirs` are unit directions [P, 3].
  virtual Output evaluate(const Tensor& points, const Tensor& dirs, const FeatureVolumePyramid* pyramid) const = 0;

  /// log h as a [1] tensor.
  virtual Tensor log_sharpness() const = 0;
  double sharpness() const;
};

struct NeuralFieldConfig {
  std::size_t feature_dim = 48;
  std::size_t pos_levels = 6;
  std::size_t dir_levels = 4;
  std::size_t sdf_hidden = 64;
  std::size_t sdf_layers = 5;
  std::size_t color_hidden = 64;
  std::size_t color_layers = 3;
  double inv_sharpness = 0.3;
  /// Radius of the initial sphere, as a fraction of the box half-extent.
  double init_radius = 0.5;
};

class NeuralField final : public FieldModel {
 public:
  NeuralField() = default;
  NeuralField(const NeuralFieldConfig& config, const Aabb& box, Rng& rng);

  Tensor sdf(const Tensor& points, const FeatureVolumePyramid* pyramid) const override;
  Output evaluate(const Tensor& points, const Tensor& dirs, const FeatureVolumePyramid* pyramid) const override;
  Tensor log_sharpness() const override { return log_h_; }

  void collect(std::vector<NamedTensor>& out) const;
  const NeuralFieldConfig& config() const { return config_; }
  Mlp& sdf_decoder() { return sdf_mlp_; }
  Mlp& color_decoder() { return color_mlp_; }

 private:
  Tensor sdf_input(const Tensor& points, const FeatureVolumePyramid* pyramid, Tensor* features) const;

  NeuralFieldConfig config_;
  Aabb box_;
  Mlp sdf_mlp_;
  Mlp color_mlp_;
  Tensor log_h_;
};

/// The exact scene SDF and albedo; carries no trainable state.
class AnalyticField final : public FieldModel {
 public:
  AnalyticField(AnalyticScene scene, double inv_sharpness);

  Tensor sdf(const Tensor& points, const FeatureVolumePyramid* pyramid) const override;
  Output evaluate(const Tensor& points, const Tensor& dirs, const FeatureVolumePyramid* pyramid) const override;
  Tensor log_sharpness() const override { return log_h_; }

 private:
  AnalyticScene scene_;
  Tensor log_h_;
};

/// Stratified samples on [z_near, z_far]: sample i is drawn uniformly from
/// the i-th of n equal sub-intervals.
std::vector<double> sample_coarse(double z_near, double z_far, std::size_t n, std::uint64_t seed);

/// Draws m stratified samples from the piecewise-constant density whose bin
/// [z_i, z_{i+1}) has mass proportional to weights[i] + 1e-5, merges them with
/// z, and returns the sorted union with values closer than 1e-12 collapsed.
std::vector<double> sample_importance(std::span<const double> z, std::span<const double> weights, std::size_t m,
                                      std::uint64_t seed);
/// The inverse-CDF positions alone, for stratum positions u in [0, 1).
std::vector<double> inverse_cdf(std::span<const double> z, std::span<const double> weights,
                                std::span<const double> u);

struct NeusWeights {
  std::vector<double> alpha;
  std::vector<double> transmittance;
  std::vector<double> weights;
};

/// Opacity, transmittance and weight of every sample; Phi(s_i) below 1e-12
/// yields alpha 0.
NeusWeights neus_weights(std::span<const double> sdf, double sharpness);

/// Fused compositing over rays whose samples are stored back to back.
/// sdf [P], rgb [P, 3], log_h [1]; offsets has one entry per ray plus the end.
/// Returns [R, 4]: color then depth.
Tensor composite(const Tensor& sdf, const Tensor& rgb, const Tensor& log_h, std::span<const double> z,
                 std::span<const std::size_t> offsets);

struct RenderResult {
  Tensor rgbd;                       // [R, 4]
  Tensor sdf;                        // [P]
  std::vector<double> z;             // [P]
  std::vector<Vec3> positions;       // [P]
  std::vector<std::size_t> offsets;  // [R + 1]
  std::vector<double> weights;       // [P]

  std::size_t ray_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  double weight_sum(std::size_t ray) const;
};

/// Renders rays at the given per-ray sample depths (each strictly increasing,
/// at least two).
RenderResult render_with_samples(const FieldModel& field, const FeatureVolumePyramid* pyramid,
                                 const std::vector<Ray>& rays, const std::vector<std::vector<double>>& z);

/// Per-ray sample depths: n_coarse stratified samples inside the ray bounds,
/// plus n_fine importance samples from a gradient-free coarse pass when
/// n_fine > 0. Ray r draws from the stream derive_seed(seed, r).
std::vector<std::vector<double>> draw_samples(const FieldModel& field, const FeatureVolumePyramid* pyramid,
                                              const std::vector<Ray>& rays, std::size_t n_coarse,
                                              std::size_t n_fine, std::uint64_t seed);

/// Rays must carry bounds from ray_aabb.
RenderResult render_rays(const FieldModel& field, const FeatureVolumePyramid* pyramid, const std::vector<Ray>& rays,
                         std::size_t n_coarse, std::size_t n_fine, std::uint64_t seed);

struct RayRender {
  bool hit = false;  // false when the ray misses the box
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  RenderResult detail;
};

/// Clips the ray to `box` and renders it.
RayRender render_ray(const FieldModel& field, const FeatureVolumePyramid* pyramid, const Aabb& box, Ray ray,
                     std::size_t n_coarse, std::size_t n_fine, std::uint64_t seed);

/// depth / weight_sum for display; 0 when the weight sum is below 1e-12.
double normalized_depth(double depth, double weight_sum);

}  // namespace pcnr
