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

// Training objective: color, depth, Eikonal, near-surface and free-space
// SDF terms, combined as a weighted sum.
#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "pcnr/camera.hpp"
#include "pcnr/feature_volume.hpp"
#include "pcnr/neural_field.hpp"
#include "pcnr/tensor.hpp"

namespace pcnr {

struct LossWeights {
  double color = 10.0;
  double depth = 1.0;
  double eikonal = 0.01;
  double near_surface = 10.0;
  double free_space = 1.0;
  /// Samples with D - z <= threshold count as near-surface.
  double threshold = 0.05;
  /// Steepness of the free-space penalty on negative SDF.
  double steepness = 5.0;
  /// Samples with D - z < -behind_cutoff are left out of both SDF terms. The
  /// default keeps every sample behind the surface in the near-surface term.
  double behind_cutoff = std::numeric_limits<double>::infinity();
  /// When set, every sample on a ray without valid depth joins the free-space
  /// term with b = +inf. Off by default: such rays carry no SDF supervision.
  bool miss_free_space = false;

  /// Throws std::invalid_argument unless every weight is >= 0 and threshold, steepness > 0.
  void validate() const;
};

struct LossTerm {
  Tensor value = Tensor::scalar(0.0);
  std::size_t count = 0;
};

/// (1/R) sum_r ||pred_r - target_r||^2 over [R, 3] colors.
LossTerm color_loss(const Tensor& pred, std::span<const double> target);

/// Mean of (pred - target)^2 over rays with valid[r] set; 0 with count 0 when none are valid.
LossTerm depth_loss(const Tensor& pred, std::span<const double> target, const std::vector<std::uint8_t>& valid);

struct EikonalTerm {
  LossTerm term;
  std::size_t skipped = 0;  // points whose stencil leaves the box
};

/// Step used for the central differences: 1e-3 of the box diagonal over sqrt(3).
double eikonal_step(const Aabb& box);

/// Mean of (||grad s|| - 1)^2, with grad s from central differences of the
/// field SDF; the six stencil evaluations stay in the graph.
EikonalTerm eikonal_loss(const FieldModel& field, const FeatureVolumePyramid* pyramid, const Aabb& box,
                         const std::vector<Vec3>& points);

struct SdfSupervision {
  LossTerm near_surface;
  LossTerm free_space;
};

/// Per sample b = D - z on rays with valid depth. Near-surface samples (b <= t)
/// contribute |s - b|; the rest contribute max(0, exp(-alpha s) - 1, s - b).
/// Each term is the mean over its own samples.
SdfSupervision sdf_supervision(const Tensor& sdf, std::span<const double> z, std::span<const std::size_t> offsets,
                               std::span<const double> depth, const std::vector<std::uint8_t>& valid,
                               const LossWeights& weights);

struct LossParts {
  LossTerm color;
  LossTerm depth;
  LossTerm eikonal;
  LossTerm near_surface;
  LossTerm free_space;
};

struct LossReport {
  double color = 0.0;
  double depth = 0.0;
  double eikonal = 0.0;
  double near_surface = 0.0;
  double free_space = 0.0;
  double total = 0.0;
  std::size_t color_rays = 0;
  std::size_t depth_rays = 0;
  std::size_t eikonal_points = 0;
  std::size_t near_samples = 0;
  std::size_t free_samples = 0;
  Tensor total_tensor;
};

LossReport total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace pcnr
