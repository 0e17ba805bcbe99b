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

#include <cmath>

#include "pcnr/losses.hpp"
#include "pcnr/rng.hpp"

namespace pcnr {
namespace {

// s(p) = 0.5 x^2 + sin(2 y) + 0.3 z^3 + 0.1
class PolyField final : public FieldModel {
 public:
  static double value(const Vec3& p) { return 0.5 * p.x() * p.x() + std::sin(2 * p.y()) + 0.3 * std::pow(p.z(), 3) + 0.1; }
  Tensor sdf(const Tensor& points, const FeatureVolumePyramid*) const override {
    const std::size_t n = points.dim(0);
    const Tensor x = reshape(slice(points, 1, 0, 1), {n});
    const Tensor y = reshape(slice(points, 1, 1, 2), {n});
    const Tensor z = reshape(slice(points, 1, 2, 3), {n});
    return add_scalar(add(add(mul_scalar(square(x), 0.5), sin(mul_scalar(y, 2.0))), mul_scalar(mul(square(z), z), 0.3)),
                      0.1);
  }
  Output evaluate(const Tensor& points, const Tensor&, const FeatureVolumePyramid* v) const override {
    return {sdf(points, v), Tensor::zeros({points.dim(0), 3})};
  }
  Tensor log_sharpness() const override { return Tensor::from_values({1}, {0.0}); }
};

class ConstantField final : public FieldModel {
 public:
  Tensor sdf(const Tensor& points, const FeatureVolumePyramid*) const override {
    return Tensor::full({points.dim(0)}, 0.25);
  }
  Output evaluate(const Tensor& points, const Tensor&, const FeatureVolumePyramid* v) const override {
    return {sdf(points, v), Tensor::zeros({points.dim(0), 3})};
  }
  Tensor log_sharpness() const override { return Tensor::from_values({1}, {0.0}); }
};

std::vector<Vec3> random_points(Rng& rng, int n, double r) {
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) out.emplace_back(rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r));
  return out;
}

TEST(ColorLoss, PerfectPredictionIsZero) {
  const std::vector<double> c{0.1, 0.2, 0.3, 0.9, 0.8, 0.7};
  const auto l = color_loss(Tensor::from_values({2, 3}, c), c);
  EXPECT_EQ(l.value.item(), 0.0);
  EXPECT_EQ(l.count, 2u);
}

TEST(ColorLoss, SingleRayArithmetic) {
  const auto l = color_loss(Tensor::from_values({1, 3}, {0.6, 0.2, 0.3}), std::vector<double>{0.5, 0.2, 0.3});
  EXPECT_NEAR(l.value.item(), 0.01, 1e-15);
}

TEST(ColorLoss, MatchesLoopOracle) {
  Rng rng(1);
  std::vector<double> p(60), t(60);
  for (int i = 0; i < 60; ++i) {
    p[i] = rng.uniform();
    t[i] = rng.uniform();
  }
  double oracle = 0.0;
  for (int r = 0; r < 20; ++r) {
    double sq = 0.0;
    for (int k = 0; k < 3; ++k) sq += (p[r * 3 + k] - t[r * 3 + k]) * (p[r * 3 + k] - t[r * 3 + k]);
    oracle += sq;
  }
  oracle /= 20;
  EXPECT_NEAR(color_loss(Tensor::from_values({20, 3}, p), t).value.item(), oracle, 1e-12);
}

TEST(ColorLoss, RejectsEmptyAndMismatchedBatches) {
  EXPECT_ANY_THROW(color_loss(Tensor::zeros({0, 3}), std::vector<double>{}));
  EXPECT_ANY_THROW(color_loss(Tensor::zeros({2, 3}), std::vector<double>(3, 0.0)));
}

TEST(DepthLoss, AllInvalidIsZeroWithZeroCount) {
  const auto l = depth_loss(Tensor::from_values({2}, {1.0, 2.0}), std::vector<double>{0.0, 0.0}, {0, 0});
  EXPECT_EQ(l.value.item(), 0.0);
  EXPECT_EQ(l.count, 0u);
}

TEST(DepthLoss, SingleValidRay) {
  const auto l = depth_loss(Tensor::from_values({2}, {2.0, 7.0}), std::vector<double>{1.0, 0.0}, {1, 0});
  EXPECT_EQ(l.value.item(), 1.0);
  EXPECT_EQ(l.count, 1u);
}

TEST(DepthLoss, MaskedMeanMatchesLoopOracle) {
  Rng rng(2);
  std::vector<double> p(30), t(30);
  std::vector<std::uint8_t> valid(30);
  double sum = 0.0;
  int n = 0;
  for (int i = 0; i < 30; ++i) {
    p[i] = rng.uniform(0, 3);
    valid[i] = rng.uniform() < 0.6;
    t[i] = valid[i] ? rng.uniform(0.5, 3) : 0.0;
    if (valid[i]) {
      sum += (p[i] - t[i]) * (p[i] - t[i]);
      ++n;
    }
  }
  const auto l = depth_loss(Tensor::from_values({30}, p), t, valid);
  EXPECT_NEAR(l.value.item(), sum / n, 1e-12);
  EXPECT_EQ(l.count, static_cast<std::size_t>(n));
}

TEST(Eikonal, ExactSphereSdfHasNearZeroLoss) {
  AnalyticScene s;
  s.box = Aabb{};
  s.primitives.push_back({Sphere{Vec3::Zero(), 0.5}, Vec3::Constant(0.5)});
  AnalyticField f(s, 0.1);
  Rng rng(3);
  std::vector<Vec3> pts;
  while (pts.size() < 200) {
    const Vec3 p(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9));
    if (p.norm() > 0.1) pts.push_back(p);
  }
  const auto e = eikonal_loss(f, nullptr, s.box, pts);
  EXPECT_EQ(e.term.count, 200u);
  EXPECT_LT(e.term.value.item(), 1e-6);
}

TEST(Eikonal, ConstantFieldCostsOnePerPoint) {
  Rng rng(4);
  const auto e = eikonal_loss(ConstantField{}, nullptr, Aabb{}, random_points(rng, 10, 0.5));
  EXPECT_DOUBLE_EQ(e.term.value.item(), 1.0);
}

TEST(Eikonal, StepAndSkippedStencils) {
  const Aabb box{Vec3::Zero(), Vec3(2, 2, 2)};
  const double eps = eikonal_step(box);
  EXPECT_NEAR(eps, 1e-3 * std::sqrt(12.0) / std::sqrt(3.0), 1e-15);
  const std::vector<Vec3> pts{Vec3(1, 1, 1), Vec3(0.5 * eps, 1, 1), Vec3(1, 2, 1)};
  const auto e = eikonal_loss(ConstantField{}, nullptr, box, pts);
  EXPECT_EQ(e.term.count, 1u);
  EXPECT_EQ(e.skipped, 2u);
  EXPECT_EQ(eikonal_loss(ConstantField{}, nullptr, box, {Vec3(0, 0, 0)}).term.value.item(), 0.0);
}

TEST(Eikonal, CentralDifferenceAgreesWithFivePointOracle) {
  const Aabb box{Vec3::Constant(-2), Vec3::Constant(2)};
  const double eps = eikonal_step(box);
  Rng rng(5);
  const auto pts = random_points(rng, 50, 1.5);
  double oracle = 0.0;
  for (const Vec3& p : pts) {
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
      Vec3 e = Vec3::Zero();
      e[a] = eps;
      g[a] = (-PolyField::value(p + 2 * e) + 8 * PolyField::value(p + e) - 8 * PolyField::value(p - e) +
              PolyField::value(p - 2 * e)) /
             (12 * eps);
    }
    oracle += (g.norm() - 1) * (g.norm() - 1);
  }
  oracle /= 50;
  const double got = eikonal_loss(PolyField{}, nullptr, box, pts).term.value.item();
  EXPECT_NEAR(got, oracle, 20 * eps * eps);
  EXPECT_GT(std::abs(got - oracle), 0.0);
}

TEST(Eikonal, GradientFlowsToFieldInputs) {
  const Aabb box{Vec3::Constant(-2), Vec3::Constant(2)};
  Rng rng(6);
  const auto pts = random_points(rng, 3, 1.0);
  class Scaled final : public FieldModel {
   public:
    Tensor k = Tensor::scalar(1.7, true);
    Tensor sdf(const Tensor& points, const FeatureVolumePyramid* v) const override {
      return mul(PolyField{}.sdf(points, v), k);
    }
    Output evaluate(const Tensor& points, const Tensor& d, const FeatureVolumePyramid* v) const override {
      return {sdf(points, v), Tensor::zeros({points.dim(0), 3})};
    }
    Tensor log_sharpness() const override { return Tensor::from_values({1}, {0.0}); }
  } field;
  const auto e = eikonal_loss(field, nullptr, box, pts);
  e.term.value.backward();
  const double g = field.k.grad()[0];
  const double h = 1e-6;
  field.k.mutable_values()[0] = 1.7 + h;
  const double up = eikonal_loss(field, nullptr, box, pts).term.value.item();
  field.k.mutable_values()[0] = 1.7 - h;
  const double down = eikonal_loss(field, nullptr, box, pts).term.value.item();
  EXPECT_NEAR(g, (up - down) / (2 * h), 1e-6);
}

TEST(SdfSupervision, SampleOnSurfaceWithZeroSdfCostsNothing) {
  const std::vector<double> z{1.0};
  const std::vector<std::size_t> offsets{0, 1};
  const auto s = sdf_supervision(Tensor::from_values({1}, {0.0}), z, offsets, std::vector<double>{1.0}, {1},
                                 LossWeights{});
  EXPECT_EQ(s.near_surface.value.item(), 0.0);
  EXPECT_EQ(s.near_surface.count, 1u);
  EXPECT_EQ(s.free_space.count, 0u);
}

TEST(SdfSupervision, ConsistentFreeSpaceIsUnpenalized) {
  const std::vector<double> z{0.5};
  const std::vector<std::size_t> offsets{0, 1};
  const auto s = sdf_supervision(Tensor::from_values({1}, {1.5}), z, offsets, std::vector<double>{2.0}, {1},
                                 LossWeights{});
  EXPECT_EQ(s.free_space.value.item(), 0.0);
  EXPECT_EQ(s.free_space.count, 1u);
}

TEST(SdfSupervision, NegativeFreeSpacePrediction) {
  const std::vector<double> z{0.5};
  const std::vector<std::size_t> offsets{0, 1};
  const auto s = sdf_supervision(Tensor::from_values({1}, {-0.1}), z, offsets, std::vector<double>{2.0}, {1},
                                 LossWeights{});
  EXPECT_NEAR(s.free_space.value.item(), std::exp(0.5) - 1.0, 1e-15);
  EXPECT_NEAR(s.free_space.value.item(), 0.64872, 1e-5);
}

TEST(SdfSupervision, PartitionsAndMasksMatchLoopOracle) {
  Rng rng(7);
  const LossWeights w;
  std::vector<double> z, s, depth;
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint8_t> valid;
  for (int r = 0; r < 6; ++r) {
    const double d = rng.uniform(1, 3);
    valid.push_back(r != 2);
    depth.push_back(r == 2 ? 0.0 : d);
    const auto zr = sample_coarse(0.5, 4.0, 12, rng.next_u64());
    for (double v : zr) {
      z.push_back(v);
      s.push_back(rng.uniform(-1, 1));
    }
    offsets.push_back(z.size());
  }
  double near = 0.0, free = 0.0;
  std::size_t n_near = 0, n_free = 0;
  for (int r = 0; r < 6; ++r) {
    if (!valid[r]) continue;
    for (std::size_t i = offsets[r]; i < offsets[r + 1]; ++i) {
      const double b = depth[r] - z[i];
      if (b <= w.threshold) {
        near += std::abs(s[i] - b);
        ++n_near;
      } else {
        free += std::max({0.0, std::exp(-w.steepness * s[i]) - 1.0, s[i] - b});
        ++n_free;
      }
    }
  }
  const auto got = sdf_supervision(Tensor::from_values({z.size()}, s), z, offsets, depth, valid, w);
  EXPECT_EQ(got.near_surface.count, n_near);
  EXPECT_EQ(got.free_space.count, n_free);
  EXPECT_NEAR(got.near_surface.value.item(), near / n_near, 1e-12);
  EXPECT_NEAR(got.free_space.value.item(), free / n_free, 1e-12);
}

TEST(SdfSupervision, BehindCutoffDropsDeepSamples) {
  // D = 2: b = 1.5, 0.0, -0.04, -0.3, -1.0
  const std::vector<double> z{0.5, 2.0, 2.04, 2.3, 3.0};
  const std::vector<std::size_t> offsets{0, 5};
  const std::vector<double> s{1.5, 0.2, 0.1, -0.3, 0.4};
  LossWeights w;
  w.behind_cutoff = 0.05;
  const auto got = sdf_supervision(Tensor::from_values({5}, s), z, offsets, std::vector<double>{2.0}, {1}, w);
  EXPECT_EQ(got.near_surface.count, 2u);
  EXPECT_EQ(got.free_space.count, 1u);
  EXPECT_NEAR(got.near_surface.value.item(), (0.2 + 0.14) / 2, 1e-15);

  const auto all = sdf_supervision(Tensor::from_values({5}, s), z, offsets, std::vector<double>{2.0}, {1},
                                   LossWeights{});
  EXPECT_EQ(all.near_surface.count, 4u);
}

TEST(SdfSupervision, MissRaysJoinFreeSpaceOnlyWhenEnabled) {
  const std::vector<double> z{1.0, 2.0};
  const std::vector<std::size_t> offsets{0, 2};
  const Tensor s = Tensor::from_values({2}, {0.3, -0.1});
  const auto off = sdf_supervision(s, z, offsets, std::vector<double>{0.0}, {0}, LossWeights{});
  EXPECT_EQ(off.free_space.count, 0u);
  EXPECT_EQ(off.near_surface.count, 0u);
  LossWeights w;
  w.miss_free_space = true;
  const auto on = sdf_supervision(s, z, offsets, std::vector<double>{0.0}, {0}, w);
  EXPECT_EQ(on.free_space.count, 2u);
  EXPECT_EQ(on.near_surface.count, 0u);
  EXPECT_NEAR(on.free_space.value.item(), (std::exp(0.5) - 1.0) / 2, 1e-15);
}

TEST(SdfSupervision, NegativeCutoffRejected) {
  LossWeights w;
  w.behind_cutoff = -0.1;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(TotalLoss, ZeroPartsGiveZero) {
  const auto r = total_loss(LossParts{}, LossWeights{});
  EXPECT_EQ(r.total, 0.0);
}

LossParts parts_of(double c, double d, double e, double s, double f) {
  LossParts p;
  p.color.value = Tensor::scalar(c);
  p.depth.value = Tensor::scalar(d);
  p.eikonal.value = Tensor::scalar(e);
  p.near_surface.value = Tensor::scalar(s);
  p.free_space.value = Tensor::scalar(f);
  return p;
}

TEST(TotalLoss, DefaultWeightsOnUnitParts) {
  const auto r = total_loss(parts_of(1, 1, 1, 1, 1), LossWeights{});
  EXPECT_NEAR(r.total, 22.01, 1e-12);
  EXPECT_EQ(LossWeights{}.color, 10.0);
  EXPECT_EQ(LossWeights{}.depth, 1.0);
  EXPECT_EQ(LossWeights{}.eikonal, 0.01);
  EXPECT_EQ(LossWeights{}.near_surface, 10.0);
  EXPECT_EQ(LossWeights{}.free_space, 1.0);
  EXPECT_EQ(LossWeights{}.threshold, 0.05);
  EXPECT_EQ(LossWeights{}.steepness, 5.0);
}

TEST(TotalLoss, MatchesScalarOracle) {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const double c = rng.uniform(), d = rng.uniform(), e = rng.uniform(), s = rng.uniform(), f = rng.uniform();
    LossWeights w;
    w.color = rng.uniform(0, 20);
    w.free_space = rng.uniform(0, 2);
    const auto r = total_loss(parts_of(c, d, e, s, f), w);
    EXPECT_NEAR(r.total, w.color * c + w.depth * d + w.eikonal * e + w.near_surface * s + w.free_space * f, 1e-12);
    EXPECT_EQ(r.total, r.total_tensor.item());
  }
}

TEST(TotalLoss, DisabledTermLeavesOthersUntouched) {
  LossWeights w;
  w.color = 0.0;
  const auto r = total_loss(parts_of(3, 1, 1, 1, 1), w);
  EXPECT_NEAR(r.total, 12.01, 1e-12);
  Tensor c = Tensor::scalar(3.0, true);
  LossParts p = parts_of(3, 1, 1, 1, 1);
  p.color.value = c;
  total_loss(p, w).total_tensor.backward();
  EXPECT_TRUE(c.grad().empty() || c.grad()[0] == 0.0);
}

TEST(LossWeightsValidation, RejectsNegativeAndZeroShapeParameters) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.depth = -1;
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w = LossWeights{};
  w.threshold = 0;
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w = LossWeights{};
  w.steepness = -2;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace pcnr
