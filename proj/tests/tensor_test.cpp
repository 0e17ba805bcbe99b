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
#include <vector>

#include "pcnr/gradcheck.hpp"
#include "pcnr/gradcheck_suite.hpp"
#include "pcnr/mlp.hpp"
#include "pcnr/rng.hpp"
#include "pcnr/tensor.hpp"

namespace pcnr {
namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, double lo, double hi, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(shape, std::move(v), grad);
}

TEST(Tensor, SigmoidAtZero) { EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5); }

TEST(Tensor, SigmoidIsStableForLargeInputs) {
  const Tensor y = sigmoid(Tensor::from_values({2}, {-800.0, 800.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 1.0);
}

TEST(Tensor, MatmulIdentity) {
  Rng rng(3);
  const Tensor a = random_tensor(rng, {3, 3}, -2, 2, false);
  const Tensor eye = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor out = matmul(eye, a);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(out[i], a[i]);
}

TEST(Tensor, MatmulAgainstLoops) {
  Rng rng(4);
  const Tensor a = random_tensor(rng, {4, 3}, -1, 1, false);
  const Tensor b = random_tensor(rng, {3, 5}, -1, 1, false);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 5 + j];
      EXPECT_NEAR(c[i * 5 + j], s, 1e-14);
    }
  }
}

TEST(Tensor, AffineEqualsMatmulPlusBias) {
  Rng rng(5);
  const Tensor x = random_tensor(rng, {6, 4}, -1, 1, false);
  const Tensor w = random_tensor(rng, {4, 3}, -1, 1, false);
  const Tensor b = random_tensor(rng, {3}, -1, 1, false);
  const Tensor y1 = affine(x, w, b);
  const Tensor y2 = add(matmul(x, w), b);
  for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_NEAR(y1[i], y2[i], 1e-15);
}

TEST(Tensor, GradientOfSumOfSquares) {
  Tensor x = Tensor::from_values({3}, {1, 2, 3}, true);
  sum(mul(x, x)).backward();
  const std::vector<double> expect{2, 4, 6};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(x.grad()[i], expect[i]);
    const double eps = 1e-5;
    const double xi = x[i];
    const double fd = ((xi + eps) * (xi + eps) - (xi - eps) * (xi - eps)) / (2 * eps);
    EXPECT_NEAR(x.grad()[i], fd, 1e-8);
  }
}

TEST(Tensor, BackwardOnConstantLeavesGradientsZero) {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  const Tensor c = Tensor::scalar(4.0);
  c.backward();
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Tensor, BackwardOnLeafIsOne) {
  Tensor x = Tensor::scalar(2.5, true);
  x.backward();
  ASSERT_EQ(x.grad().size(), 1u);
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Tensor, BackwardRejectsNonScalarRoot) {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  EXPECT_THROW(mul_scalar(x, 2.0).backward(), ShapeError);
}

TEST(Tensor, LeafGradientShapeMatchesLeaf) {
  Rng rng(6);
  Tensor w = random_tensor(rng, {3, 2}, -1, 1);
  Tensor x = random_tensor(rng, {5, 3}, -1, 1);
  sum(tanh(matmul(x, w))).backward();
  EXPECT_EQ(w.grad().size(), w.numel());
  EXPECT_EQ(x.grad().size(), x.numel());
}

TEST(Tensor, SharedSubexpressionVisitedOnce) {
  Tensor x = Tensor::scalar(3.0, true);
  const Tensor y = mul(x, x);
  add(y, y).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Tensor, ShapeMismatchIsDiagnosed) {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({4});
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2, 3]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(concat({a, b}, 0), ShapeError);
  EXPECT_THROW(slice(a, 1, 2, 4), ShapeError);
  EXPECT_THROW(reshape(a, {5}), ShapeError);
}

TEST(Tensor, BroadcastShapes) {
  EXPECT_EQ(broadcast_shapes({3, 1}, {1, 4}), (Shape{3, 4}));
  EXPECT_EQ(broadcast_shapes({4}, {2, 3, 4}), (Shape{2, 3, 4}));
  EXPECT_THROW(broadcast_shapes({3}, {4}), ShapeError);
}

TEST(Tensor, BroadcastGradientReducesOverStretchedAxes) {
  Tensor a = Tensor::from_values({3, 1}, {1, 2, 3}, true);
  Tensor b = Tensor::from_values({1, 2}, {10, 20}, true);
  sum(mul(a, b)).backward();
  for (double g : a.grad()) EXPECT_DOUBLE_EQ(g, 30.0);
  for (double g : b.grad()) EXPECT_DOUBLE_EQ(g, 6.0);
}

TEST(Tensor, MeanGradientIsSumGradientOverCount) {
  Rng rng(7);
  Tensor x = random_tensor(rng, {4, 5}, -1, 1);
  sum(square(x)).backward();
  const std::vector<double> gs(x.grad().begin(), x.grad().end());
  x.zero_grad();
  mean(square(x)).backward();
  for (std::size_t i = 0; i < gs.size(); ++i) EXPECT_NEAR(x.grad()[i], gs[i] / 20.0, 1e-15);
}

TEST(Tensor, BackwardIsDeterministic) {
  auto run = [] {
    Rng rng(8);
    Tensor w = random_tensor(rng, {6, 6}, -1, 1);
    Tensor x = random_tensor(rng, {10, 6}, -1, 1, false);
    mean(softplus(matmul(softplus(matmul(x, w), 5.0), w))).backward();
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Tensor, NoGradGuardStopsRecording) {
  Tensor x = Tensor::scalar(1.0, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(mul(x, x).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(mul(x, x).requires_grad());
}

TEST(Tensor, ReductionsAlongAxis) {
  const Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor s0 = sum(x, 0);
  const Tensor m1 = mean(x, 1);
  EXPECT_EQ(s0.shape(), (Shape{3}));
  EXPECT_EQ(s0[0], 5.0);
  EXPECT_EQ(s0[2], 9.0);
  EXPECT_EQ(m1.shape(), (Shape{2}));
  EXPECT_EQ(m1[1], 5.0);
}

TEST(Tensor, ConcatSliceGather) {
  const Tensor a = Tensor::from_values({2, 1}, {1, 2});
  const Tensor b = Tensor::from_values({2, 2}, {3, 4, 5, 6});
  const Tensor c = concat({a, b}, 1);
  EXPECT_EQ(std::vector<double>(c.values().begin(), c.values().end()), (std::vector<double>{1, 3, 4, 2, 5, 6}));
  const Tensor s = slice(c, 1, 1, 3);
  EXPECT_EQ(std::vector<double>(s.values().begin(), s.values().end()), (std::vector<double>{3, 4, 5, 6}));
  const std::vector<std::size_t> rows{1, 1, 0};
  const Tensor g = gather_rows(c, rows);
  EXPECT_EQ(g.shape(), (Shape{3, 3}));
  EXPECT_EQ(g[0], 2.0);
  EXPECT_EQ(g[6], 1.0);
}

TEST(Tensor, KinkDerivativesAreZero) {
  Tensor x = Tensor::from_values({2}, {0.0, 0.0}, true);
  sum(add(relu(x), abs(x))).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(Gradcheck, SquareAtThree) {
  const auto r = gradcheck([](const Tensor& x) { return square(x); }, Tensor::scalar(3.0));
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_TRUE(r.finite);
}

TEST(Gradcheck, SoftplusOfLinear) {
  Rng rng(11);
  Mlp layer({8, 8}, Activation::kSoftplus, rng);
  Tensor x = random_tensor(rng, {8, 8}, -1, 1);
  Tensor w = layer.layers()[0].weight;
  Tensor b = layer.layers()[0].bias;
  const auto r = gradcheck([&] { return sum(softplus(layer.layers()[0].forward(x))); }, {x, w, b});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Gradcheck, ReluAtKinkIsExcludedByNudging) {
  const auto at_kink = gradcheck([](const Tensor& x) { return sum(relu(x)); }, Tensor::from_values({1}, {0.0}));
  EXPECT_GT(at_kink.max_rel_error, 0.1);
  const auto nudged = gradcheck([](const Tensor& x) { return sum(relu(x)); }, Tensor::from_values({1}, {1e-3}));
  EXPECT_LT(nudged.max_rel_error, 1e-9);
}

TEST(Gradcheck, ReportsNonFiniteCoordinate) {
  const auto r = gradcheck([](const Tensor& x) { return sum(log(x)); }, Tensor::from_values({3}, {1.0, 2.0, 0.0}));
  EXPECT_FALSE(r.finite);
  EXPECT_FALSE(r.passed(1e-6));
  EXPECT_FALSE(r.message.empty());
}

TEST(Gradcheck, RejectsNonPositiveEpsilon) {
  EXPECT_THROW(gradcheck([](const Tensor& x) { return sum(x); }, Tensor::scalar(1.0), 0.0), std::invalid_argument);
}

TEST(Gradcheck, SuitePassesEveryCase) {
  const auto cases = run_gradcheck_suite(10, 0);
  EXPECT_GE(cases.size(), 20u);
  for (const auto& c : cases) {
    EXPECT_TRUE(c.passed) << c.name << " " << c.max_error << " " << c.detail;
    EXPECT_GE(c.instances, 10u) << c.name;
    EXPECT_LT(c.max_error, c.composite ? kCompositeTolerance : kPrimitiveTolerance) << c.name;
  }
}

}  // namespace
}  // namespace pcnr
