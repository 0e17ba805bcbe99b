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

#include "pcnr/neural_field.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace pcnr {

namespace {

constexpr double kPhiFloor = 1e-12;
constexpr double kPdfFloor = 1e-5;
constexpr double kDedupe = 1e-12;

double sigmoid_of(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// log(sigmoid(x)) = -softplus(-x)
double log_sigmoid(double x) { return -(std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)))); }

struct AlphaTerm {
  double alpha = 0.0;
  double ratio = 0.0;
  bool active = false;  // alpha = 1 - ratio with a nonzero derivative
};

AlphaTerm alpha_between(double s0, double s1, double h) {
  AlphaTerm t;
  if (sigmoid_of(h * s0) < kPhiFloor) return t;
  t.ratio = std::exp(log_sigmoid(h * s1) - log_sigmoid(h * s0));
  if (t.ratio >= 1.0) return t;
  t.alpha = 1.0 - t.ratio;
  t.active = true;
  return t;
}

void check_samples(std::span<const double> z, std::size_t ray) {
  if (z.empty()) throw std::invalid_argument("ray " + std::to_string(ray) + " has no samples");
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (!(z[i] > z[i - 1])) {
      throw std::invalid_argument("ray " + std::to_string(ray) + ": sample depths must increase strictly");
    }
  }
}

Tensor points_tensor(const std::vector<Vec3>& pts) {
  std::vector<double> v(pts.size() * 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int a = 0; a < 3; ++a) v[i * 3 + a] = pts[i][a];
  return Tensor::from_values({pts.size(), 3}, std::move(v));
}

}  // namespace

std::vector<double> positional_encode(std::span<const double> x, std::size_t levels) {
  std::vector<double> out;
  out.reserve(x.size() * (1 + 2 * levels));
  for (double v : x) {
    out.push_back(v);
    double freq = std::numbers::pi;
    for (std::size_t l = 0; l < levels; ++l, freq *= 2.0) {
      out.push_back(std::sin(freq * v));
      out.push_back(std::cos(freq * v));
    }
  }
  return out;
}

Tensor positional_encode(const Tensor& x, std::size_t levels) {
  if (x.rank() != 2) throw ShapeError("positional_encode expects [P, D], got " + shape_str(x.shape()));
  if (levels == 0) return x;
  const std::size_t rows = x.dim(0);
  const std::size_t width = x.dim(1) * (1 + 2 * levels);
  std::vector<double> out = positional_encode(x.values(), levels);
  return Tensor::make_op(
      {rows, width}, std::move(out), {x},
      [levels](std::span<const double> g, const GradInputs& in) {
        const auto xv = in.value(0);
        auto gx = in.grad(0);
        const std::size_t block = 1 + 2 * levels;
        for (std::size_t i = 0; i < xv.size(); ++i) {
          const double* gi = &g[i * block];
          double acc = gi[0];
          double freq = std::numbers::pi;
          for (std::size_t l = 0; l < levels; ++l, freq *= 2.0) {
            acc += freq * (gi[1 + 2 * l] * std::cos(freq * xv[i]) - gi[2 + 2 * l] * std::sin(freq * xv[i]));
          }
          gx[i] += acc;
        }
      },
      "positional_encode");
}

double FieldModel::sharpness() const { return std::exp(log_sharpness().values()[0]); }

NeuralField::NeuralField(const NeuralFieldConfig& config, const Aabb& box, Rng& rng) : config_(config), box_(box) {
  if (config.sdf_layers < 1 || config.color_layers < 1) throw std::invalid_argument("decoders need a hidden layer");
  if (!(config.inv_sharpness > 0.0)) throw std::invalid_argument("inv_sharpness must be positive");
  const std::size_t pos_width = 3 * (1 + 2 * config.pos_levels);
  const std::size_t dir_width = 3 * (1 + 2 * config.dir_levels);

  std::vector<std::size_t> sdf_widths{pos_width + config.feature_dim};
  for (std::size_t i = 0; i < config.sdf_layers; ++i) sdf_widths.push_back(config.sdf_hidden);
  sdf_widths.push_back(1);
  sdf_mlp_ = Mlp(sdf_widths, Activation::kSoftplus, rng, 100.0);

  // Geometric initialization: the decoder starts as |q| - r in normalized
  // coordinates, reading only the raw position columns.
  auto& layers = sdf_mlp_.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto w = layers[l].weight.mutable_values();
    const std::size_t in = layers[l].in_features();
    const std::size_t out = layers[l].out_features();
    std::fill(layers[l].bias.mutable_values().begin(), layers[l].bias.mutable_values().end(), 0.0);
    if (l + 1 == layers.size()) {
      for (double& v : w) v = rng.normal(std::sqrt(std::numbers::pi) / std::sqrt(static_cast<double>(in)), 1e-4);
      layers[l].bias.mutable_values()[0] = -config.init_radius;
    } else if (l == 0) {
      std::fill(w.begin(), w.end(), 0.0);
      const std::size_t block = 1 + 2 * config.pos_levels;
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t o = 0; o < out; ++o)
          w[a * block * out + o] = rng.normal(0.0, std::sqrt(2.0) / std::sqrt(static_cast<double>(out)));
    } else {
      for (double& v : w) v = rng.normal(0.0, std::sqrt(2.0) / std::sqrt(static_cast<double>(out)));
    }
  }

  std::vector<std::size_t> color_widths{pos_width + dir_width + config.feature_dim};
  for (std::size_t i = 0; i < config.color_layers; ++i) color_widths.push_back(config.color_hidden);
  color_widths.push_back(3);
  color_mlp_ = Mlp(color_widths, Activation::kSoftplus, rng, 10.0);

  log_h_ = Tensor::from_values({1}, {-std::log(config.inv_sharpness)}, true);
}

Tensor NeuralField::sdf_input(const Tensor& points, const FeatureVolumePyramid* pyramid, Tensor* features) const {
  if (points.rank() != 2 || points.dim(1) != 3) throw ShapeError("field points must be [P, 3]");
  const Vec3 c = box_.center();
  const Vec3 inv_half = (2.0 * box_.extent().cwiseInverse());
  const Tensor center = Tensor::from_values({3}, {c.x(), c.y(), c.z()});
  const Tensor scale = Tensor::from_values({3}, {inv_half.x(), inv_half.y(), inv_half.z()});
  const Tensor enc = positional_encode(mul(sub(points, center), scale), config_.pos_levels);
  if (config_.feature_dim == 0) {
    *features = Tensor();
    return enc;
  }
  if (!pyramid) throw std::invalid_argument("neural field needs a feature volume");
  if (pyramid->feature_dim() != config_.feature_dim) {
    throw ShapeError("feature volume width " + std::to_string(pyramid->feature_dim()) + " does not match decoder width " +
                     std::to_string(config_.feature_dim));
  }
  *features = query_features(*pyramid, points);
  return enc;
}

Tensor NeuralField::sdf(const Tensor& points, const FeatureVolumePyramid* pyramid) const {
  Tensor features;
  Tensor enc = sdf_input(points, pyramid, &features);
  Tensor in = features.defined() && config_.feature_dim ? concat({enc, features}, 1) : enc;
  const double scale = 0.5 * box_.extent().mean();
  return mul_scalar(reshape(sdf_mlp_.forward(in), {points.dim(0)}), scale);
}

FieldModel::Output NeuralField::evaluate(const Tensor& points, const Tensor& dirs,
                                         const FeatureVolumePyramid* pyramid) const {
  Tensor features;
  Tensor enc = sdf_input(points, pyramid, &features);
  const bool with_features = config_.feature_dim > 0;
  Tensor sdf_in = with_features ? concat({enc, features}, 1) : enc;
  const double scale = 0.5 * box_.extent().mean();
  Output out;
  out.sdf = mul_scalar(reshape(sdf_mlp_.forward(sdf_in), {points.dim(0)}), scale);
  Tensor dir_enc = positional_encode(dirs, config_.dir_levels);
  Tensor color_in = with_features ? concat({enc, dir_enc, features}, 1) : concat({enc, dir_enc}, 1);
  out.rgb = sigmoid(color_mlp_.forward(color_in));
  return out;
}

void NeuralField::collect(std::vector<NamedTensor>& out) const {
  sdf_mlp_.collect("sdf", out);
  color_mlp_.collect("color", out);
  out.push_back({"log_h", log_h_});
}

AnalyticField::AnalyticField(AnalyticScene scene, double inv_sharpness) : scene_(std::move(scene)) {
  if (!(inv_sharpness > 0.0)) throw std::invalid_argument("inv_sharpness must be positive");
  log_h_ = Tensor::from_values({1}, {-std::log(inv_sharpness)});
}

Tensor AnalyticField::sdf(const Tensor& points, const FeatureVolumePyramid*) const {
  const std::size_t n = points.dim(0);
  const auto p = points.values();
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = sdf_eval(scene_, Vec3(p[i * 3], p[i * 3 + 1], p[i * 3 + 2]));
  return Tensor::from_values({n}, std::move(s));
}

FieldModel::Output AnalyticField::evaluate(const Tensor& points, const Tensor&, const FeatureVolumePyramid*) const {
  const std::size_t n = points.dim(0);
  const auto p = points.values();
  std::vector<double> s(n);
  std::vector<double> rgb(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 q(p[i * 3], p[i * 3 + 1], p[i * 3 + 2]);
    s[i] = sdf_eval(scene_, q);
    const Vec3 a = albedo_at(scene_, q);
    for (int k = 0; k < 3; ++k) rgb[i * 3 + k] = a[k];
  }
  return {Tensor::from_values({n}, std::move(s)), Tensor::from_values({n, 3}, std::move(rgb))};
}

std::vector<double> sample_coarse(double z_near, double z_far, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("sample_coarse needs n >= 2");
  if (!(z_far > z_near)) throw std::invalid_argument("sample_coarse needs z_far > z_near");
  Rng rng(seed);
  const double step = (z_far - z_near) / static_cast<double>(n);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = std::min(z_near + (static_cast<double>(i) + rng.uniform()) * step, z_far);
  return z;
}

std::vector<double> inverse_cdf(std::span<const double> z, std::span<const double> weights,
                                std::span<const double> u) {
  if (z.size() < 2) throw std::invalid_argument("inverse_cdf needs at least two samples");
  if (weights.size() + 1 < z.size()) throw std::invalid_argument("inverse_cdf needs one weight per bin");
  const std::size_t bins = z.size() - 1;
  std::vector<double> cdf(bins + 1, 0.0);
  for (std::size_t i = 0; i < bins; ++i) {
    if (weights[i] < 0.0) throw std::invalid_argument("inverse_cdf weights must be nonnegative");
    cdf[i + 1] = cdf[i] + weights[i] + kPdfFloor;
  }
  const double total = cdf[bins];
  for (double& c : cdf) c /= total;
  std::vector<double> out;
  out.reserve(u.size());
  for (double v : u) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), v);
    std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cdf.begin() - 1, 0));
    i = std::min(i, bins - 1);
    const double t = std::clamp((v - cdf[i]) / (cdf[i + 1] - cdf[i]), 0.0, 1.0);
    out.push_back(z[i] + t * (z[i + 1] - z[i]));
  }
  return out;
}

std::vector<double> sample_importance(std::span<const double> z, std::span<const double> weights, std::size_t m,
                                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> u(m);
  for (std::size_t j = 0; j < m; ++j) u[j] = (static_cast<double>(j) + rng.uniform()) / static_cast<double>(m);
  std::vector<double> merged = inverse_cdf(z, weights, u);
  merged.insert(merged.end(), z.begin(), z.end());
  std::sort(merged.begin(), merged.end());
  std::vector<double> out;
  out.reserve(merged.size());
  for (double v : merged) {
    if (out.empty() || v - out.back() > kDedupe) out.push_back(v);
  }
  return out;
}

NeusWeights neus_weights(std::span<const double> sdf, double sharpness) {
  const std::size_t n = sdf.size();
  NeusWeights w;
  w.alpha.assign(n, 0.0);
  w.transmittance.assign(n, 0.0);
  w.weights.assign(n, 0.0);
  double t = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 < n) w.alpha[i] = alpha_between(sdf[i], sdf[i + 1], sharpness).alpha;
    w.transmittance[i] = t;
    w.weights[i] = t * w.alpha[i];
    t *= 1.0 - w.alpha[i];
  }
  return w;
}

Tensor composite(const Tensor& sdf, const Tensor& rgb, const Tensor& log_h, std::span<const double> z,
                 std::span<const std::size_t> offsets) {
  const std::size_t p = sdf.numel();
  if (rgb.shape() != Shape{p, 3} || z.size() != p || log_h.numel() != 1 || offsets.empty() ||
      offsets.back() != p) {
    throw ShapeError("composite: sdf " + shape_str(sdf.shape()) + ", rgb " + shape_str(rgb.shape()) +
                     " and sample bookkeeping disagree");
  }
  const std::size_t rays = offsets.size() - 1;
  const double h = std::exp(log_h.values()[0]);
  const auto s = sdf.values();
  const auto c = rgb.values();
  std::vector<double> out(rays * 4, 0.0);
  for (std::size_t r = 0; r < rays; ++r) {
    const std::size_t b = offsets[r];
    const std::size_t e = offsets[r + 1];
    check_samples(z.subspan(b, e - b), r);
    double t = 1.0;
    for (std::size_t i = b; i + 1 < e; ++i) {
      const double a = alpha_between(s[i], s[i + 1], h).alpha;
      const double w = t * a;
      for (int k = 0; k < 3; ++k) out[r * 4 + k] += w * c[i * 3 + k];
      out[r * 4 + 3] += w * z[i];
      t *= 1.0 - a;
    }
  }
  auto zs = std::make_shared<std::vector<double>>(z.begin(), z.end());
  auto offs = std::make_shared<std::vector<std::size_t>>(offsets.begin(), offsets.end());
  return Tensor::make_op(
      {rays, 4}, std::move(out), {sdf, rgb, log_h},
      [zs, offs, rays](std::span<const double> g, const GradInputs& in) {
        const auto s = in.value(0);
        const auto c = in.value(1);
        const double h = std::exp(in.value(2)[0]);
        const auto& z = *zs;
        std::span<double> gs, gc, gl;
        if (in.wants(0)) gs = in.grad(0);
        if (in.wants(1)) gc = in.grad(1);
        if (in.wants(2)) gl = in.grad(2);
        double gh = 0.0;
        std::vector<AlphaTerm> terms;
        std::vector<double> trans, e;
        for (std::size_t r = 0; r < rays; ++r) {
          const std::size_t b = (*offs)[r];
          const std::size_t n = (*offs)[r + 1] - b;
          const double* go = &g[r * 4];
          terms.assign(n, AlphaTerm{});
          trans.assign(n, 0.0);
          e.assign(n, 0.0);
          double t = 1.0;
          for (std::size_t i = 0; i < n; ++i) {
            if (i + 1 < n) terms[i] = alpha_between(s[b + i], s[b + i + 1], h);
            trans[i] = t;
            t *= 1.0 - terms[i].alpha;
            const std::size_t k = b + i;
            e[i] = go[0] * c[k * 3] + go[1] * c[k * 3 + 1] + go[2] * c[k * 3 + 2] + go[3] * z[k];
            if (!gc.empty()) {
              const double w = trans[i] * terms[i].alpha;
              for (int ch = 0; ch < 3; ++ch) gc[k * 3 + ch] += w * go[ch];
            }
          }
          double u = 0.0;  // sum over later samples of their contribution, relative to T_{k+1}
          for (std::size_t kk = n; kk-- > 0;) {
            if (kk + 1 < n) u = e[kk + 1] * terms[kk + 1].alpha + (1.0 - terms[kk + 1].alpha) * u;
            const AlphaTerm& a = terms[kk];
            if (!a.active) continue;
            const double g_alpha = trans[kk] * (e[kk] - u);
            const double s0 = s[b + kk];
            const double s1 = s[b + kk + 1];
            const double q0 = sigmoid_of(-h * s0);  // 1 - Phi(s0)
            const double q1 = sigmoid_of(-h * s1);
            if (!gs.empty()) {
              gs[b + kk] += g_alpha * a.ratio * h * q0;
              gs[b + kk + 1] -= g_alpha * a.ratio * h * q1;
            }
            gh += g_alpha * a.ratio * (s0 * q0 - s1 * q1);
          }
        }
        if (!gl.empty()) gl[0] += gh * h;
      },
      "composite");
}

double RenderResult::weight_sum(std::size_t ray) const {
  double sum = 0.0;
  for (std::size_t i = offsets[ray]; i < offsets[ray + 1]; ++i) sum += weights[i];
  return sum;
}

RenderResult render_with_samples(const FieldModel& field, const FeatureVolumePyramid* pyramid,
                                 const std::vector<Ray>& rays, const std::vector<std::vector<double>>& z) {
  if (z.size() != rays.size()) throw std::invalid_argument("render: one sample list per ray is required");
  RenderResult res;
  res.offsets.push_back(0);
  std::vector<double> dirs;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    check_samples(z[r], r);
    for (double zi : z[r]) {
      res.z.push_back(zi);
      res.positions.push_back(rays[r].at(zi));
      for (int a = 0; a < 3; ++a) dirs.push_back(rays[r].direction[a]);
    }
    res.offsets.push_back(res.z.size());
  }
  const std::size_t p = res.z.size();
  const Tensor pts = points_tensor(res.positions);
  const Tensor dir = Tensor::from_values({p, 3}, std::move(dirs));
  FieldModel::Output out = field.evaluate(pts, dir, pyramid);
  res.sdf = out.sdf;
  res.rgbd = composite(out.sdf, out.rgb, field.log_sharpness(), res.z, res.offsets);

  const double h = field.sharpness();
  const auto s = out.sdf.values();
  res.weights.reserve(p);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto w = neus_weights(s.subspan(res.offsets[r], res.offsets[r + 1] - res.offsets[r]), h);
    res.weights.insert(res.weights.end(), w.weights.begin(), w.weights.end());
  }
  return res;
}

std::vector<std::vector<double>> draw_samples(const FieldModel& field, const FeatureVolumePyramid* pyramid,
                                              const std::vector<Ray>& rays, std::size_t n_coarse,
                                              std::size_t n_fine, std::uint64_t seed) {
  std::vector<std::vector<double>> z(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    z[r] = sample_coarse(rays[r].z_near, rays[r].z_far, n_coarse, derive_seed(seed, r));
  }
  if (n_fine == 0 || rays.empty()) return z;

  NoGradGuard no_grad;
  std::vector<Vec3> pts;
  pts.reserve(rays.size() * n_coarse);
  for (std::size_t r = 0; r < rays.size(); ++r)
    for (double zi : z[r]) pts.push_back(rays[r].at(zi));
  const Tensor s = field.sdf(points_tensor(pts), pyramid);
  const double h = field.sharpness();
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto w = neus_weights(s.values().subspan(r * n_coarse, n_coarse), h);
    z[r] = sample_importance(z[r], w.weights, n_fine, derive_seed(derive_seed(seed, r), 1));
  }
  return z;
}

RenderResult render_rays(const FieldModel& field, const FeatureVolumePyramid* pyramid, const std::vector<Ray>& rays,
                         std::size_t n_coarse, std::size_t n_fine, std::uint64_t seed) {
  return render_with_samples(field, pyramid, rays, draw_samples(field, pyramid, rays, n_coarse, n_fine, seed));
}

RayRender render_ray(const FieldModel& field, const FeatureVolumePyramid* pyramid, const Aabb& box, Ray ray,
                     std::size_t n_coarse, std::size_t n_fine, std::uint64_t seed) {
  RayRender out;
  const auto bounds = ray_aabb(ray, box);
  if (!bounds) return out;
  ray.z_near = bounds->first;
  ray.z_far = bounds->second;
  out.hit = true;
  out.detail = render_rays(field, pyramid, {ray}, n_coarse, n_fine, seed);
  const auto v = out.detail.rgbd.values();
  out.color = Vec3(v[0], v[1], v[2]);
  out.depth = v[3];
  return out;
}

double normalized_depth(double depth, double weight_sum) { return weight_sum < 1e-12 ? 0.0 : depth / weight_sum; }

}  // namespace pcnr
