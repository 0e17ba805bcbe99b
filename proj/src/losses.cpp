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

#include "pcnr/losses.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace pcnr {

void LossWeights::validate() const {
  for (double w : {color, depth, eikonal, near_surface, free_space}) {
    if (!(w >= 0.0)) throw std::invalid_argument("loss weights must be nonnegative");
  }
  if (!(threshold > 0.0)) throw std::invalid_argument("near-surface threshold must be positive");
  if (!(steepness > 0.0)) throw std::invalid_argument("free-space steepness must be positive");
  if (!(behind_cutoff >= 0.0)) throw std::invalid_argument("behind-surface cutoff must be nonnegative");
}

LossTerm color_loss(const Tensor& pred, std::span<const double> target) {
  if (pred.rank() != 2 || pred.dim(1) != 3 || target.size() != pred.numel()) {
    throw ShapeError("color_loss: prediction " + shape_str(pred.shape()) + " and " + std::to_string(target.size()) +
                     " target values disagree");
  }
  const std::size_t rays = pred.dim(0);
  if (rays == 0) throw std::invalid_argument("color_loss: empty batch");
  const Tensor t = Tensor::from_values(pred.shape(), {target.begin(), target.end()});
  return {mul_scalar(sum(square(sub(pred, t))), 1.0 / static_cast<double>(rays)), rays};
}

LossTerm depth_loss(const Tensor& pred, std::span<const double> target, const std::vector<std::uint8_t>& valid) {
  if (pred.rank() != 1 || target.size() != pred.numel() || valid.size() != pred.numel()) {
    throw ShapeError("depth_loss: prediction " + shape_str(pred.shape()) + ", targets and mask disagree");
  }
  std::vector<std::size_t> rows;
  std::vector<double> t;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (valid[i]) {
      rows.push_back(i);
      t.push_back(target[i]);
    }
  }
  if (rows.empty()) return {};
  const std::size_t n = rows.size();
  const Tensor picked = gather_rows(pred, rows);
  return {mean(square(sub(picked, Tensor::from_values({n}, std::move(t))))), n};
}

double eikonal_step(const Aabb& box) { return 1e-3 * box.diagonal() / std::sqrt(3.0); }

EikonalTerm eikonal_loss(const FieldModel& field, const FeatureVolumePyramid* pyramid, const Aabb& box,
                         const std::vector<Vec3>& points) {
  EikonalTerm out;
  const double eps = eikonal_step(box);
  std::vector<double> stencil;
  std::size_t used = 0;
  for (const Vec3& p : points) {
    bool inside = true;
    for (int a = 0; a < 3 && inside; ++a) inside = p[a] - eps >= box.min[a] && p[a] + eps <= box.max[a];
    if (!inside) {
      ++out.skipped;
      continue;
    }
    for (int a = 0; a < 3; ++a) {
      for (double sign : {1.0, -1.0}) {
        Vec3 q = p;
        q[a] += sign * eps;
        stencil.insert(stencil.end(), {q.x(), q.y(), q.z()});
      }
    }
    ++used;
  }
  if (used == 0) return out;
  const Tensor s = field.sdf(Tensor::from_values({used * 6, 3}, std::move(stencil)), pyramid);

  const auto sv = s.values();
  double loss = 0.0;
  for (std::size_t i = 0; i < used; ++i) {
    double n2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double g = (sv[i * 6 + a * 2] - sv[i * 6 + a * 2 + 1]) / (2.0 * eps);
      n2 += g * g;
    }
    const double d = std::sqrt(n2) - 1.0;
    loss += d * d;
  }
  loss /= static_cast<double>(used);
  out.term.count = used;
  out.term.value = Tensor::make_op(
      {}, {loss}, {s},
      [used, eps](std::span<const double> g, const GradInputs& in) {
        const auto sv = in.value(0);
        auto gs = in.grad(0);
        for (std::size_t i = 0; i < used; ++i) {
          double grad[3];
          double n2 = 0.0;
          for (int a = 0; a < 3; ++a) {
            grad[a] = (sv[i * 6 + a * 2] - sv[i * 6 + a * 2 + 1]) / (2.0 * eps);
            n2 += grad[a] * grad[a];
          }
          const double norm = std::sqrt(n2);
          if (norm == 0.0) continue;
          const double dn = g[0] * 2.0 * (norm - 1.0) / static_cast<double>(used);
          for (int a = 0; a < 3; ++a) {
            const double ds = dn * grad[a] / norm / (2.0 * eps);
            gs[i * 6 + a * 2] += ds;
            gs[i * 6 + a * 2 + 1] -= ds;
          }
        }
      },
      "eikonal");
  return out;
}

SdfSupervision sdf_supervision(const Tensor& sdf, std::span<const double> z, std::span<const std::size_t> offsets,
                               std::span<const double> depth, const std::vector<std::uint8_t>& valid,
                               const LossWeights& weights) {
  if (sdf.numel() != z.size() || offsets.empty() || offsets.back() != z.size() ||
      depth.size() + 1 != offsets.size() || valid.size() != depth.size()) {
    throw ShapeError("sdf_supervision: sample bookkeeping disagrees with " + shape_str(sdf.shape()));
  }
  auto near_idx = std::make_shared<std::vector<std::size_t>>();
  auto far_idx = std::make_shared<std::vector<std::size_t>>();
  auto b = std::make_shared<std::vector<double>>(z.size(), 0.0);
  for (std::size_t r = 0; r + 1 < offsets.size(); ++r) {
    if (!valid[r]) {
      if (!weights.miss_free_space) continue;
      for (std::size_t i = offsets[r]; i < offsets[r + 1]; ++i) {
        (*b)[i] = std::numeric_limits<double>::infinity();
        far_idx->push_back(i);
      }
      continue;
    }
    for (std::size_t i = offsets[r]; i < offsets[r + 1]; ++i) {
      (*b)[i] = depth[r] - z[i];
      if ((*b)[i] < -weights.behind_cutoff) continue;
      ((*b)[i] <= weights.threshold ? near_idx : far_idx)->push_back(i);
    }
  }
  const auto s = sdf.values();
  SdfSupervision out;
  if (!near_idx->empty()) {
    double acc = 0.0;
    for (std::size_t i : *near_idx) acc += std::abs(s[i] - (*b)[i]);
    const double inv = 1.0 / static_cast<double>(near_idx->size());
    out.near_surface.count = near_idx->size();
    out.near_surface.value = Tensor::make_op(
        {}, {acc * inv}, {sdf},
        [near_idx, b, inv](std::span<const double> g, const GradInputs& in) {
          const auto sv = in.value(0);
          auto gs = in.grad(0);
          for (std::size_t i : *near_idx) {
            const double d = sv[i] - (*b)[i];
            gs[i] += g[0] * inv * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
          }
        },
        "near_surface");
  }
  if (!far_idx->empty()) {
    const double alpha = weights.steepness;
    double acc = 0.0;
    for (std::size_t i : *far_idx) {
      acc += std::max({0.0, std::exp(-alpha * s[i]) - 1.0, s[i] - (*b)[i]});
    }
    const double inv = 1.0 / static_cast<double>(far_idx->size());
    out.free_space.count = far_idx->size();
    out.free_space.value = Tensor::make_op(
        {}, {acc * inv}, {sdf},
        [far_idx, b, inv, alpha](std::span<const double> g, const GradInputs& in) {
          const auto sv = in.value(0);
          auto gs = in.grad(0);
          for (std::size_t i : *far_idx) {
            const double e = std::exp(-alpha * sv[i]) - 1.0;
            const double d = sv[i] - (*b)[i];
            // The largest branch carries the gradient; ties go to the earlier one.
            if (e <= 0.0 && d <= 0.0) continue;
            gs[i] += g[0] * inv * (e >= d ? -alpha * (e + 1.0) : 1.0);
          }
        },
        "free_space");
  }
  return out;
}

LossReport total_loss(const LossParts& parts, const LossWeights& weights) {
  LossReport r;
  r.color = parts.color.value.item();
  r.depth = parts.depth.value.item();
  r.eikonal = parts.eikonal.value.item();
  r.near_surface = parts.near_surface.value.item();
  r.free_space = parts.free_space.value.item();
  r.color_rays = parts.color.count;
  r.depth_rays = parts.depth.count;
  r.eikonal_points = parts.eikonal.count;
  r.near_samples = parts.near_surface.count;
  r.free_samples = parts.free_space.count;

  const std::pair<const LossTerm*, double> terms[] = {{&parts.color, weights.color},
                                                      {&parts.depth, weights.depth},
                                                      {&parts.eikonal, weights.eikonal},
                                                      {&parts.near_surface, weights.near_surface},
                                                      {&parts.free_space, weights.free_space}};
  Tensor total = Tensor::scalar(0.0);
  for (const auto& [term, w] : terms) {
    if (w == 0.0) continue;
    total = add(total, mul_scalar(term->value, w));
  }
  r.total_tensor = total;
  r.total = total.item();
  return r;
}

}  // namespace pcnr
