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

#include "pcnr/feature_volume.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace pcnr {

namespace {

constexpr double kBoxSlack = 1e-9;

// Continuous cell-center coordinate along one axis with the boundary clamp.
struct AxisCoord {
  std::size_t i0 = 0;
  double frac = 0.0;
  double dfrac_dp = 0.0;  // 0 where clamped
};

AxisCoord axis_coord(double p, double lo, double cell, std::size_t n) {
  AxisCoord c;
  if (n < 2) return c;
  const double g = (p - lo) / cell - 0.5;
  const double top = static_cast<double>(n - 1);
  const double gc = std::clamp(g, 0.0, top);
  c.i0 = std::min(static_cast<std::size_t>(gc), n - 2);
  c.frac = gc - static_cast<double>(c.i0);
  c.dfrac_dp = (g > 0.0 && g < top) ? 1.0 / cell : 0.0;
  return c;
}

void check_inside(const Aabb& box, const Vec3& p, const char* what) {
  if (!box.contains(p, kBoxSlack)) {
    throw GeometryError(std::string(what) + ": point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                        ", " + std::to_string(p.z()) + ") lies outside the volume box");
  }
}

}  // namespace

std::vector<std::size_t> farthest_point_sample(const std::vector<Vec3>& points, std::size_t count,
                                               std::size_t start) {
  std::vector<std::size_t> centers;
  if (points.empty() || count == 0) return centers;
  count = std::min(count, points.size());
  std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
  std::size_t current = start % points.size();
  for (std::size_t c = 0; c < count; ++c) {
    centers.push_back(current);
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = (points[i] - points[current]).squaredNorm();
      if (d < dist[i]) dist[i] = d;
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    current = best;
  }
  return centers;
}

std::vector<std::size_t> nearest_neighbors(const std::vector<Vec3>& points, const Vec3& center, std::size_t k) {
  k = std::min(k, points.size());
  std::vector<std::pair<double, std::size_t>> keyed(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) keyed[i] = {(points[i] - center).squaredNorm(), i};
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k), keyed.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = keyed[i].second;
  return out;
}

MaskResult mask_points(const ColoredPointCloud& cloud, std::size_t group_count, std::size_t group_size,
                       double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw std::invalid_argument("mask ratio must lie in [0, 1)");
  MaskResult result;
  const std::size_t m = cloud.size();
  if (m < group_size || group_count == 0 || group_size == 0) {
    result.cloud = cloud;
    result.kept.resize(m);
    std::iota(result.kept.begin(), result.kept.end(), std::size_t{0});
    result.too_small = true;
    return result;
  }
  Rng rng(seed);
  const std::size_t groups = std::min(group_count, m);
  // The epsilon keeps products like 0.29 * 100 from flooring one short.
  const auto n_drop = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(groups) + 1e-9));
  const auto centers = farthest_point_sample(cloud.positions, groups, static_cast<std::size_t>(rng.below(m)));
  const auto dropped = sample_without_replacement(groups, n_drop, rng.next_u64());

  std::vector<std::uint8_t> is_dropped(groups, 0);
  for (std::size_t g : dropped) is_dropped[g] = 1;
  std::vector<std::uint8_t> in_dropped(m, 0);
  std::vector<std::uint8_t> in_kept(m, 0);
  for (std::size_t g = 0; g < groups; ++g) {
    auto& mark = is_dropped[g] ? in_dropped : in_kept;
    for (std::size_t i : nearest_neighbors(cloud.positions, cloud.positions[centers[g]], group_size)) mark[i] = 1;
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!in_dropped[i] || in_kept[i]) result.kept.push_back(i);
  }
  result.cloud = cloud.subset(result.kept);
  result.groups = groups;
  result.dropped_groups = n_drop;
  return result;
}

PointEncoder::PointEncoder(std::size_t channels, std::size_t hidden, Rng& rng)
    : mlp_({6, hidden, hidden, channels}, Activation::kSoftplus, rng), channels_(channels) {}

Tensor PointEncoder::encode(const ColoredPointCloud& cloud, const Aabb& box) const {
  const std::size_t m = cloud.size();
  if (m == 0) throw GeometryError("encode_points: empty cloud");
  const Vec3 center = box.center();
  const Vec3 half = 0.5 * box.extent();
  std::vector<double> in(m * 6);
  for (std::size_t i = 0; i < m; ++i) {
    const Vec3 q = (cloud.positions[i] - center).cwiseQuotient(half);
    for (int a = 0; a < 3; ++a) {
      in[i * 6 + a] = q[a];
      in[i * 6 + 3 + a] = cloud.colors[i][a];
    }
  }
  return mlp_.forward(Tensor::from_values({m, 6}, std::move(in)));
}

std::size_t cell_of(const Aabb& box, std::size_t resolution, const Vec3& p) {
  const Vec3 ext = box.extent();
  std::array<std::size_t, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double g = (p[a] - box.min[a]) / ext[a] * static_cast<double>(resolution);
    idx[a] = std::min(static_cast<std::size_t>(std::max(g, 0.0)), resolution - 1);
  }
  return (idx[0] * resolution + idx[1]) * resolution + idx[2];
}

FeatureVolumePyramid pool_to_pyramid(const ColoredPointCloud& cloud, const Tensor& embeddings,
                                     const std::vector<std::size_t>& resolutions, const Aabb& box) {
  if (resolutions.empty()) throw GeometryError("pool_to_pyramid: no resolutions");
  for (std::size_t i = 0; i < resolutions.size(); ++i) {
    if (resolutions[i] == 0 || (i && resolutions[i] <= resolutions[i - 1])) {
      throw GeometryError("pool_to_pyramid: resolutions must be positive and ascending");
    }
  }
  const std::size_t m = cloud.size();
  if (embeddings.rank() != 2 || embeddings.dim(0) != m) {
    throw ShapeError("pool_to_pyramid: embeddings " + shape_str(embeddings.shape()) + " do not match " +
                     std::to_string(m) + " points");
  }
  for (const auto& p : cloud.positions) check_inside(box, p, "pool_to_pyramid");
  const std::size_t c = embeddings.dim(1);

  FeatureVolumePyramid pyramid;
  pyramid.box = box;
  pyramid.channels = c;
  for (std::size_t n : resolutions) {
    VolumeLevel level;
    level.resolution = n;
    const std::size_t cells = level.cells();
    level.counts.assign(cells, 0);
    level.occupied.assign(cells, 0);
    auto cell_index = std::make_shared<std::vector<std::size_t>>(m);
    for (std::size_t i = 0; i < m; ++i) {
      (*cell_index)[i] = cell_of(box, n, cloud.positions[i]);
      ++level.counts[(*cell_index)[i]];
    }
    std::vector<double> grid(cells * c, 0.0);
    const auto e = embeddings.values();
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t cell = (*cell_index)[i];
      for (std::size_t k = 0; k < c; ++k) grid[cell * c + k] += e[i * c + k];
    }
    auto inv_count = std::make_shared<std::vector<double>>(cells, 0.0);
    for (std::size_t cell = 0; cell < cells; ++cell) {
      if (!level.counts[cell]) continue;
      level.occupied[cell] = 1;
      (*inv_count)[cell] = 1.0 / static_cast<double>(level.counts[cell]);
      for (std::size_t k = 0; k < c; ++k) grid[cell * c + k] /= static_cast<double>(level.counts[cell]);
    }
    level.grid = Tensor::make_op(
        {n, n, n, c}, std::move(grid), {embeddings},
        [cell_index, inv_count, c](std::span<const double> g, const GradInputs& in) {
          auto ge = in.grad(0);
          for (std::size_t i = 0; i < cell_index->size(); ++i) {
            const std::size_t cell = (*cell_index)[i];
            const double w = (*inv_count)[cell];
            for (std::size_t k = 0; k < c; ++k) ge[i * c + k] += w * g[cell * c + k];
          }
        },
        "pool_mean");
    pyramid.levels.push_back(std::move(level));
  }
  return pyramid;
}

Tensor dense_fill_conv(const Tensor& grid, const std::vector<std::uint8_t>& occupied, const Tensor& kernel,
                       const Tensor& bias) {
  if (grid.rank() != 4 || grid.dim(0) != grid.dim(1) || grid.dim(1) != grid.dim(2)) {
    throw ShapeError("dense_fill: grid must be [n, n, n, C], got " + shape_str(grid.shape()));
  }
  const std::size_t n = grid.dim(0);
  const std::size_t c = grid.dim(3);
  const std::size_t cells = n * n * n;
  if (kernel.shape() != Shape{27, c, c} || bias.shape() != Shape{c} || occupied.size() != cells) {
    throw ShapeError("dense_fill: kernel must be [27, C, C] and bias [C] for grid " + shape_str(grid.shape()));
  }
  const auto in = grid.values();
  const auto w = kernel.values();
  const auto b = bias.values();

  // Occupied cells and their in-range neighbor offsets, shared with backward.
  struct Tap {
    std::size_t src;
    std::size_t dst;
    std::size_t offset;
  };
  auto taps = std::make_shared<std::vector<Tap>>();
  const auto ni = static_cast<long>(n);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    if (!occupied[cell]) continue;
    const long i = static_cast<long>(cell / (n * n));
    const long j = static_cast<long>((cell / n) % n);
    const long k = static_cast<long>(cell % n);
    // in[cell] feeds out[cell - d] through kernel tap d.
    for (std::size_t o = 0; o < 27; ++o) {
      const long di = static_cast<long>(o / 9) - 1;
      const long dj = static_cast<long>((o / 3) % 3) - 1;
      const long dk = static_cast<long>(o % 3) - 1;
      const long oi = i - di, oj = j - dj, ok = k - dk;
      if (oi < 0 || oj < 0 || ok < 0 || oi >= ni || oj >= ni || ok >= ni) continue;
      taps->push_back({cell, static_cast<std::size_t>((oi * ni + oj) * ni + ok), o});
    }
  }

  std::vector<double> pre(cells * c);
  for (std::size_t cell = 0; cell < cells; ++cell) std::copy(b.begin(), b.end(), pre.begin() + cell * c);
  for (const Tap& t : *taps) {
    const double* x = &in[t.src * c];
    const double* wk = &w[t.offset * c * c];
    double* z = &pre[t.dst * c];
    for (std::size_t ci = 0; ci < c; ++ci) {
      const double xv = x[ci];
      if (xv == 0.0) continue;
      for (std::size_t co = 0; co < c; ++co) z[co] += xv * wk[ci * c + co];
    }
  }
  std::vector<std::uint8_t> touched(cells, 0);
  for (const Tap& t : *taps) touched[t.dst] = 1;
  std::vector<double> tanh_bias(c);
  for (std::size_t k = 0; k < c; ++k) tanh_bias[k] = std::tanh(b[k]);
  auto act = std::make_shared<std::vector<double>>(cells * c);
  std::vector<double> out(cells * c);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t i = cell * c + k;
      (*act)[i] = touched[cell] ? std::tanh(pre[i]) : tanh_bias[k];
      out[i] = in[i] + (*act)[i];
    }
  }

  return Tensor::make_op(
      grid.shape(), std::move(out), {grid, kernel, bias},
      [taps, act, c, cells](std::span<const double> g, const GradInputs& inputs) {
        std::vector<double> gz(cells * c);
        std::vector<std::uint8_t> live(cells, 0);
        for (std::size_t cell = 0; cell < cells; ++cell) {
          for (std::size_t k = 0; k < c; ++k) {
            const std::size_t i = cell * c + k;
            gz[i] = g[i] * (1.0 - (*act)[i] * (*act)[i]);
            if (gz[i] != 0.0) live[cell] = 1;
          }
        }
        if (inputs.wants(2)) {
          auto gb = inputs.grad(2);
          for (std::size_t cell = 0; cell < cells; ++cell)
            if (live[cell])
              for (std::size_t k = 0; k < c; ++k) gb[k] += gz[cell * c + k];
        }
        const auto x = inputs.value(0);
        const auto w = inputs.value(1);
        if (inputs.wants(0)) {
          auto gx = inputs.grad(0);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
          for (const Tap& t : *taps) {
            if (!live[t.dst]) continue;
            const double* wk = &w[t.offset * c * c];
            const double* gzo = &gz[t.dst * c];
            double* gxi = &gx[t.src * c];
            for (std::size_t ci = 0; ci < c; ++ci) {
              double acc = 0.0;
              for (std::size_t co = 0; co < c; ++co) acc += wk[ci * c + co] * gzo[co];
              gxi[ci] += acc;
            }
          }
        }
        if (inputs.wants(1)) {
          auto gw = inputs.grad(1);
          for (const Tap& t : *taps) {
            if (!live[t.dst]) continue;
            const double* xi = &x[t.src * c];
            const double* gzo = &gz[t.dst * c];
            double* gwk = &gw[t.offset * c * c];
            for (std::size_t ci = 0; ci < c; ++ci) {
              if (xi[ci] == 0.0) continue;
              for (std::size_t co = 0; co < c; ++co) gwk[ci * c + co] += xi[ci] * gzo[co];
            }
          }
        }
      },
      "dense_fill");
}

DenseFill::DenseFill(std::size_t levels, std::size_t channels, Rng& rng, double kernel_scale) {
  const double bound = kernel_scale / std::sqrt(static_cast<double>(channels));
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<double> w(27 * channels * channels);
    for (double& v : w) v = rng.uniform(-bound, bound);
    kernels_.push_back(Tensor::from_values({27, channels, channels}, std::move(w), true));
    biases_.push_back(Tensor::zeros({channels}, true));
  }
}

FeatureVolumePyramid DenseFill::apply(const FeatureVolumePyramid& pooled) const {
  if (pooled.levels.size() != kernels_.size()) {
    throw ShapeError("dense_fill: " + std::to_string(pooled.levels.size()) + " levels but " +
                     std::to_string(kernels_.size()) + " kernels");
  }
  FeatureVolumePyramid out = pooled;
  for (std::size_t l = 0; l < out.levels.size(); ++l) {
    out.levels[l].grid = dense_fill_conv(pooled.levels[l].grid, pooled.levels[l].occupied, kernels_[l], biases_[l]);
  }
  return out;
}

void DenseFill::collect(std::vector<NamedTensor>& out) const {
  for (std::size_t l = 0; l < kernels_.size(); ++l) {
    out.push_back({"fill.l" + std::to_string(l) + ".kernel", kernels_[l]});
    out.push_back({"fill.l" + std::to_string(l) + ".bias", biases_[l]});
  }
}

Tensor query_features(const FeatureVolumePyramid& pyramid, const Tensor& points) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw ShapeError("query_features: points must be [P, 3], got " + shape_str(points.shape()));
  }
  const std::size_t p_count = points.dim(0);
  const std::size_t c = pyramid.channels;
  const std::size_t levels = pyramid.levels.size();
  const std::size_t width = c * levels;
  const auto pv = points.values();
  for (std::size_t i = 0; i < p_count; ++i) {
    check_inside(pyramid.box, Vec3(pv[i * 3], pv[i * 3 + 1], pv[i * 3 + 2]), "query_features");
  }
  const Vec3 lo = pyramid.box.min;
  const Vec3 ext = pyramid.box.extent();
  std::vector<std::size_t> res(levels);
  for (std::size_t l = 0; l < levels; ++l) res[l] = pyramid.levels[l].resolution;

  // Corner k (bits x, y, z) of the interpolation cell and its weight.
  auto for_corners = [&](std::size_t n, const std::array<AxisCoord, 3>& ax, auto&& fn) {
    for (int k = 0; k < 8; ++k) {
      const std::size_t ii = std::min(ax[0].i0 + ((k >> 2) & 1), n - 1);
      const std::size_t jj = std::min(ax[1].i0 + ((k >> 1) & 1), n - 1);
      const std::size_t kk = std::min(ax[2].i0 + (k & 1), n - 1);
      const double fx = (k >> 2) & 1 ? ax[0].frac : 1.0 - ax[0].frac;
      const double fy = (k >> 1) & 1 ? ax[1].frac : 1.0 - ax[1].frac;
      const double fz = k & 1 ? ax[2].frac : 1.0 - ax[2].frac;
      fn(k, (ii * n + jj) * n + kk, fx, fy, fz);
    }
  };
  auto coords = [lo, ext](std::span<const double> p, std::size_t i, std::size_t n) {
    std::array<AxisCoord, 3> ax;
    for (int a = 0; a < 3; ++a) ax[a] = axis_coord(p[i * 3 + a], lo[a], ext[a] / static_cast<double>(n), n);
    return ax;
  };

  std::vector<double> out(p_count * width, 0.0);
  std::vector<Tensor> inputs{points};
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t n = res[l];
    const auto grid = pyramid.levels[l].grid.values();
    for (std::size_t i = 0; i < p_count; ++i) {
      const auto ax = coords(pv, i, n);
      double* o = &out[i * width + l * c];
      for_corners(n, ax, [&](int, std::size_t cell, double fx, double fy, double fz) {
        const double wgt = fx * fy * fz;
        if (wgt == 0.0) return;
        const double* g = &grid[cell * c];
        for (std::size_t k = 0; k < c; ++k) o[k] += wgt * g[k];
      });
    }
    inputs.push_back(pyramid.levels[l].grid);
  }

  return Tensor::make_op(
      {p_count, width}, std::move(out), inputs,
      [res, coords, for_corners, p_count, c, width, levels](std::span<const double> g, const GradInputs& in) {
        const auto pv = in.value(0);
        std::span<double> gp;
        if (in.wants(0)) gp = in.grad(0);
        for (std::size_t l = 0; l < levels; ++l) {
          const std::size_t n = res[l];
          const bool want_grid = in.wants(l + 1);
          std::span<double> gg;
          if (want_grid) gg = in.grad(l + 1);
          const auto grid = in.value(l + 1);
          for (std::size_t i = 0; i < p_count; ++i) {
            const double* go = &g[i * width + l * c];
            const auto ax = coords(pv, i, n);
            for_corners(n, ax, [&](int k, std::size_t cell, double fx, double fy, double fz) {
              if (want_grid) {
                const double wgt = fx * fy * fz;
                if (wgt != 0.0)
                  for (std::size_t ch = 0; ch < c; ++ch) gg[cell * c + ch] += wgt * go[ch];
              }
              if (!gp.empty()) {
                double dot = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) dot += go[ch] * grid[cell * c + ch];
                const double sx = (k >> 2) & 1 ? 1.0 : -1.0;
                const double sy = (k >> 1) & 1 ? 1.0 : -1.0;
                const double sz = k & 1 ? 1.0 : -1.0;
                gp[i * 3 + 0] += dot * sx * fy * fz * ax[0].dfrac_dp;
                gp[i * 3 + 1] += dot * fx * sy * fz * ax[1].dfrac_dp;
                gp[i * 3 + 2] += dot * fx * fy * sz * ax[2].dfrac_dp;
              }
            });
          }
        }
      },
      "query_features");
}

}  // namespace pcnr
