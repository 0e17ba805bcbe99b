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

#include "pcnr/gradcheck_suite.hpp"

#include <cmath>
#include <functional>

#include "pcnr/feature_volume.hpp"
#include "pcnr/gradcheck.hpp"
#include "pcnr/losses.hpp"
#include "pcnr/neural_field.hpp"
#include "pcnr/rng.hpp"

namespace pcnr {

namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, double lo, double hi, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(shape, std::move(v), requires_grad);
}

// Magnitude in [lo, hi] with a random sign: keeps kinks at 0 out of reach.
Tensor signed_tensor(Rng& rng, const Shape& shape, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  return Tensor::from_values(shape, std::move(v), true);
}

// Contracts an arbitrary tensor to a scalar with fixed random weights.
Tensor project(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(t, random_tensor(rng, t.shape(), -1.0, 1.0, false)));
}

using Instance = std::function<GradcheckResult(Rng&, std::uint64_t)>;

struct Spec {
  const char* name;
  bool composite;
  Instance run;
};

Instance unary(Tensor (*op)(const Tensor&), double lo, double hi, bool signed_input) {
  return [=](Rng& rng, std::uint64_t s) {
    Tensor x = signed_input ? signed_tensor(rng, {3, 4}, lo, hi) : random_tensor(rng, {3, 4}, lo, hi);
    return gradcheck([&] { return project(op(x), s); }, {x});
  };
}

Instance binary(Tensor (*op)(const Tensor&, const Tensor&), Shape sa, Shape sb, double lo, double hi) {
  return [=](Rng& rng, std::uint64_t s) {
    Tensor a = random_tensor(rng, sa, lo, hi);
    Tensor b = random_tensor(rng, sb, lo, hi);
    return gradcheck([&] { return project(op(a, b), s); }, {a, b});
  };
}

struct TinyScene {
  ColoredPointCloud cloud;
  Aabb box;
};

TinyScene tiny_scene(Rng& rng, std::size_t points) {
  TinyScene t;
  for (std::size_t i = 0; i < points; ++i) {
    t.cloud.positions.emplace_back(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9));
    t.cloud.colors.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  }
  return t;
}

// Small-width decoders over a two-level, two-channel volume.
struct TinyModel {
  TinyScene scene;
  PointEncoder encoder;
  DenseFill fill;
  NeuralField field;
  std::vector<std::size_t> resolutions{2, 4};

  explicit TinyModel(Rng& rng) : scene(tiny_scene(rng, 24)) {
    encoder = PointEncoder(2, 4, rng);
    fill = DenseFill(2, 2, rng, 0.5);
    NeuralFieldConfig c;
    c.feature_dim = 4;
    c.pos_levels = 2;
    c.dir_levels = 1;
    c.sdf_hidden = 6;
    c.sdf_layers = 2;
    c.color_hidden = 6;
    c.color_layers = 2;
    field = NeuralField(c, scene.box, rng);
    // Spread the feature-column weights so the checks exercise them.
    auto w = field.sdf_decoder().layers()[0].weight.mutable_values();
    for (double& v : w)
      if (v == 0.0) v = rng.uniform(-0.3, 0.3);
  }
  FeatureVolumePyramid volume() const {
    return fill.apply(pool_to_pyramid(scene.cloud, encoder.encode(scene.cloud, scene.box), resolutions, scene.box));
  }
  std::vector<Tensor> leaves(bool sdf_part, bool color_part, bool sharpness) const {
    std::vector<NamedTensor> named;
    field.collect(named);
    std::vector<Tensor> out;
    for (const auto& n : named) {
      const bool is_sdf = n.name.rfind("sdf.", 0) == 0;
      const bool is_color = n.name.rfind("color.", 0) == 0;
      if ((is_sdf && sdf_part) || (is_color && color_part) || (n.name == "log_h" && sharpness)) out.push_back(n.tensor);
    }
    return out;
  }
};

Tensor query_points(Rng& rng, std::size_t n) {
  std::vector<double> v;
  for (std::size_t i = 0; i < 3 * n; ++i) v.push_back(rng.uniform(-0.8, 0.8));
  return Tensor::from_values({n, 3}, std::move(v));
}

// Keeps every coordinate at least `margin` (in cell units) from the cell-center
// planes of every level, where the trilinear slope changes.
Tensor points_off_center_planes(Rng& rng, const Aabb& box, const std::vector<std::size_t>& res, std::size_t n,
                                double margin) {
  std::vector<double> v;
  while (v.size() < 3 * n) {
    const double x = rng.uniform(-0.95, 0.95);
    bool ok = true;
    for (std::size_t r : res) {
      const double g = (x - box.min.x()) / (2.0 / static_cast<double>(r)) - 0.5;
      const double frac = g - std::floor(g);
      ok = ok && g > margin && g < static_cast<double>(r - 1) - margin && frac > margin && frac < 1.0 - margin;
    }
    if (ok) v.push_back(x);
  }
  return Tensor::from_values({n, 3}, std::move(v), true);
}

std::vector<Spec> specs() {
  std::vector<Spec> s = {
      {"add", false, binary(add, {3, 4}, {4}, -1, 1)},
      {"sub", false, binary(sub, {3, 1}, {1, 4}, -1, 1)},
      {"mul", false, binary(mul, {3, 4}, {3, 4}, -1, 1)},
      {"div", false, binary(div, {3, 4}, {3, 4}, 0.5, 2)},
      {"maximum", false,
       [](Rng& rng, std::uint64_t s) {
         Tensor a = random_tensor(rng, {3, 4}, -1, 1);
         std::vector<double> bv(12);
         for (std::size_t i = 0; i < 12; ++i) bv[i] = a[i] + (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.1, 0.5);
         Tensor b = Tensor::from_values({3, 4}, bv, true);
         return gradcheck([&] { return project(maximum(a, b), s); }, {a, b});
       }},
      {"add_scalar", false, unary([](const Tensor& x) { return add_scalar(x, 0.7); }, -1, 1, false)},
      {"mul_scalar", false, unary([](const Tensor& x) { return mul_scalar(x, -1.3); }, -1, 1, false)},
      {"neg", false, unary(neg, -1, 1, false)},
      {"relu", false, unary(relu, 0.1, 1, true)},
      {"softplus", false, unary([](const Tensor& x) { return softplus(x, 3.0); }, -2, 2, false)},
      {"sigmoid", false, unary(sigmoid, -3, 3, false)},
      {"tanh", false, unary(tanh, -2, 2, false)},
      {"exp", false, unary(exp, -1, 1, false)},
      {"log", false, unary(log, 0.5, 2, false)},
      {"abs", false, unary(abs, 0.1, 1, true)},
      {"sqrt", false, unary(sqrt, 0.5, 2, false)},
      {"square", false, unary(square, -1, 1, false)},
      {"sin", false, unary(sin, -3, 3, false)},
      {"cos", false, unary(cos, -3, 3, false)},
      {"max_with", false, unary([](const Tensor& x) { return max_with(x, 0.0); }, 0.1, 1, true)},
      {"matmul", false, binary(matmul, {3, 5}, {5, 2}, -1, 1)},
      {"affine", false,
       [](Rng& rng, std::uint64_t s) {
         Tensor x = random_tensor(rng, {3, 5}, -1, 1);
         Tensor w = random_tensor(rng, {5, 2}, -1, 1);
         Tensor b = random_tensor(rng, {2}, -1, 1);
         return gradcheck([&] { return project(affine(x, w, b), s); }, {x, w, b});
       }},
      {"sum", false, unary([](const Tensor& x) { return mul_scalar(sum(x), 0.3); }, -1, 1, false)},
      {"mean", false, unary([](const Tensor& x) { return mul_scalar(mean(x), 0.3); }, -1, 1, false)},
      {"sum_axis", false, unary([](const Tensor& x) { return sum(x, 1); }, -1, 1, false)},
      {"mean_axis", false, unary([](const Tensor& x) { return mean(x, 0); }, -1, 1, false)},
      {"concat", false,
       [](Rng& rng, std::uint64_t s) {
         Tensor a = random_tensor(rng, {3, 2}, -1, 1);
         Tensor b = random_tensor(rng, {3, 4}, -1, 1);
         return gradcheck([&] { return project(concat({a, b}, 1), s); }, {a, b});
       }},
      {"slice", false, unary([](const Tensor& x) { return slice(x, 1, 1, 3); }, -1, 1, false)},
      {"reshape", false, unary([](const Tensor& x) { return reshape(x, {2, 6}); }, -1, 1, false)},
      {"broadcast_to", false,
       [](Rng& rng, std::uint64_t s) {
         Tensor a = random_tensor(rng, {1, 4}, -1, 1);
         return gradcheck([&] { return project(broadcast_to(a, {3, 4}), s); }, {a});
       }},
      {"gather_rows", false,
       [](Rng& rng, std::uint64_t s) {
         Tensor a = random_tensor(rng, {4, 3}, -1, 1);
         const std::vector<std::size_t> rows{2, 0, 2, 3};
         return gradcheck([&] { return project(gather_rows(a, rows), s); }, {a});
       }},
      {"positional_encode", false,
       unary([](const Tensor& x) { return positional_encode(x, 3); }, -1, 1, false)},
      {"pool_to_pyramid", false,
       [](Rng& rng, std::uint64_t s) {
         TinyScene t = tiny_scene(rng, 12);
         Tensor e = random_tensor(rng, {12, 2}, -1, 1);
         return gradcheck(
             [&] {
               auto p = pool_to_pyramid(t.cloud, e, {2, 4}, t.box);
               return add(project(p.levels[0].grid, s), project(p.levels[1].grid, s + 1));
             },
             {e});
       }},
      {"composite", false,
       [](Rng& rng, std::uint64_t s) {
         const std::vector<std::size_t> offsets{0, 5, 8};
         std::vector<double> z{0.1, 0.3, 0.45, 0.7, 0.9, 0.2, 0.5, 0.6};
         Tensor sdf = random_tensor(rng, {8}, -0.6, 0.6);
         Tensor rgb = random_tensor(rng, {8, 3}, 0.0, 1.0);
         Tensor log_h = Tensor::from_values({1}, {rng.uniform(0.0, 1.5)}, true);
         return gradcheck([&] { return project(composite(sdf, rgb, log_h, z, offsets), s); }, {sdf, rgb, log_h});
       }},
      {"encode_points", true,
       [](Rng& rng, std::uint64_t s) {
         TinyScene t = tiny_scene(rng, 6);
         PointEncoder enc(3, 5, rng);
         std::vector<NamedTensor> named;
         enc.collect(named);
         std::vector<Tensor> leaves;
         for (auto& n : named) leaves.push_back(n.tensor);
         return gradcheck([&] { return project(enc.encode(t.cloud, t.box), s); }, leaves);
       }},
      {"dense_fill", true,
       [](Rng& rng, std::uint64_t s) {
         const std::size_t n = 4, c = 2;
         std::vector<std::uint8_t> occ(n * n * n);
         std::vector<double> g(n * n * n * c, 0.0);
         for (std::size_t i = 0; i < occ.size(); ++i) {
           occ[i] = rng.uniform() < 0.4;
           if (occ[i])
             for (std::size_t k = 0; k < c; ++k) g[i * c + k] = rng.uniform(-1, 1);
         }
         Tensor grid = Tensor::from_values({n, n, n, c}, g, true);
         Tensor kernel = random_tensor(rng, {27, c, c}, -0.5, 0.5);
         Tensor bias = random_tensor(rng, {c}, -0.3, 0.3);
         return gradcheck([&] { return project(dense_fill_conv(grid, occ, kernel, bias), s); }, {grid, kernel, bias});
       }},
      {"query_features", true,
       [](Rng& rng, std::uint64_t s) {
         TinyModel m(rng);
         FeatureVolumePyramid v;
         v.box = m.scene.box;
         v.channels = 2;
         std::vector<Tensor> leaves;
         for (std::size_t r : m.resolutions) {
           VolumeLevel l;
           l.resolution = r;
           l.grid = random_tensor(rng, {r, r, r, 2}, -1, 1);
           v.levels.push_back(l);
           leaves.push_back(l.grid);
         }
         Tensor p = points_off_center_planes(rng, v.box, m.resolutions, 5, 0.02);
         leaves.push_back(p);
         return gradcheck([&] { return project(query_features(v, p), s); }, leaves);
       }},
      {"sdf", true,
       [](Rng& rng, std::uint64_t s) {
         TinyModel m(rng);
         const FeatureVolumePyramid v = m.volume();
         Tensor p = query_points(rng, 5);
         return gradcheck([&] { return project(m.field.sdf(p, &v), s); }, m.leaves(true, false, false));
       }},
      {"color", true,
       [](Rng& rng, std::uint64_t s) {
         TinyModel m(rng);
         const FeatureVolumePyramid v = m.volume();
         Tensor p = query_points(rng, 5);
         std::vector<double> d;
         for (int i = 0; i < 5; ++i) {
           Vec3 u(rng.normal(), rng.normal(), rng.normal());
           u.normalize();
           d.insert(d.end(), {u.x(), u.y(), u.z()});
         }
         Tensor dirs = Tensor::from_values({5, 3}, d);
         return gradcheck([&] { return project(m.field.evaluate(p, dirs, &v).rgb, s); },
                          m.leaves(false, true, false));
       }},
      {"render_ray_loss", true,
       [](Rng& rng, std::uint64_t) {
         TinyModel m(rng);
         const FeatureVolumePyramid v = m.volume();
         Ray ray;
         ray.origin = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), -3.0);
         ray.direction = Vec3(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 1.0).normalized();
         const auto b = ray_aabb(ray, m.scene.box);
         ray.z_near = b->first;
         ray.z_far = b->second;
         const std::vector<std::vector<double>> z{sample_coarse(ray.z_near, ray.z_far, 8, rng.next_u64())};
         const std::vector<double> target{rng.uniform(), rng.uniform(), rng.uniform()};
         return gradcheck(
             [&] {
               const RenderResult r = render_with_samples(m.field, &v, {ray}, z);
               return color_loss(slice(r.rgbd, 1, 0, 3), target).value;
             },
             m.leaves(true, true, true));
       }},
      {"eikonal_loss", true,
       [](Rng& rng, std::uint64_t) {
         TinyModel m(rng);
         const FeatureVolumePyramid v = m.volume();
         std::vector<Vec3> pts;
         for (int i = 0; i < 4; ++i) pts.emplace_back(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7));
         return gradcheck([&] { return eikonal_loss(m.field, &v, m.scene.box, pts).term.value; },
                          m.leaves(true, false, false));
       }},
      {"sdf_supervision", true,
       [](Rng& rng, std::uint64_t) {
         // Two rays with depth 1: samples spread across both partitions.
         const std::vector<double> z{0.2, 0.5, 0.8, 0.98, 1.1, 0.3, 0.6, 0.99, 1.3};
         const std::vector<std::size_t> offsets{0, 5, 9};
         const std::vector<double> depth{1.0, 1.0};
         const std::vector<std::uint8_t> valid{1, 1};
         LossWeights w;
         std::vector<double> sv;
         for (double zi : z) {
           const double b = 1.0 - zi;
           // Near-surface: away from s = b. Free space: one branch clearly dominant.
           sv.push_back(b <= w.threshold ? b + (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.02, 0.1)
                                         : (rng.uniform() < 0.5 ? rng.uniform(-0.2, -0.05) : b + rng.uniform(0.05, 0.2)));
         }
         Tensor s = Tensor::from_values({z.size()}, sv, true);
         return gradcheck(
             [&] {
               auto sup = sdf_supervision(s, z, offsets, depth, valid, w);
               return add(sup.near_surface.value, sup.free_space.value);
             },
             {s});
       }},
  };
  return s;
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(std::size_t instances, std::uint64_t seed) {
  std::vector<GradcheckCase> out;
  std::uint64_t stream = 0;
  for (const Spec& spec : specs()) {
    GradcheckCase c;
    c.name = spec.name;
    c.composite = spec.composite;
    c.tolerance = spec.composite ? kCompositeTolerance : kPrimitiveTolerance;
    for (std::size_t i = 0; i < instances; ++i) {
      const std::uint64_t s = derive_seed(seed, stream * 1000 + i);
      Rng rng(s);
      const GradcheckResult r = spec.run(rng, derive_seed(s, 7));
      ++c.instances;
      c.max_error = std::max(c.max_error, r.finite ? r.max_rel_error : INFINITY);
      if (!r.passed(c.tolerance) && c.passed) {
        c.passed = false;
        c.detail = "instance " + std::to_string(i) + ": " +
                   (r.finite ? "relative error " + std::to_string(r.max_rel_error) + " at coordinate " +
                                   std::to_string(r.worst_index)
                             : r.message);
      }
    }
    ++stream;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace pcnr
