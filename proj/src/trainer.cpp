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

#include "pcnr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "json.hpp"

namespace pcnr {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
  return out;
}

std::size_t parse_count(const KeyValue& kv, const std::string& source) {
  const long long v = parse_integer(kv, source);
  if (v < 0) throw ConfigError(source + ":" + std::to_string(kv.line) + ": '" + kv.key + "' must be nonnegative");
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> parse_count_list(const KeyValue& kv, const std::string& source) {
  KeyValue spaced = kv;
  std::replace(spaced.value.begin(), spaced.value.end(), ',', ' ');
  std::vector<std::size_t> out;
  for (double d : parse_numbers(spaced, source, 0)) {
    if (d < 0 || d != std::floor(d)) {
      throw ConfigError(source + ":" + std::to_string(kv.line) + ": '" + kv.key + "' expects nonnegative integers");
    }
    out.push_back(static_cast<std::size_t>(d));
  }
  return out;
}

struct ConfigKey {
  const char* name;
  const char* help;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const KeyValue&, const std::string&)> set;
};

ConfigKey count_key(const char* name, const char* help, std::size_t TrainConfig::*field) {
  return {name, help, [field](const TrainConfig& c) { return std::to_string(c.*field); },
          [field](TrainConfig& c, const KeyValue& kv, const std::string& s) { c.*field = parse_count(kv, s); }};
}

ConfigKey real_key(const char* name, const char* help, double TrainConfig::*field) {
  return {name, help, [field](const TrainConfig& c) { return fmt17(c.*field); },
          [field](TrainConfig& c, const KeyValue& kv, const std::string& s) { c.*field = parse_number(kv, s); }};
}

ConfigKey loss_key(const char* name, const char* help, double LossWeights::*field) {
  return {name, help, [field](const TrainConfig& c) { return fmt17(c.loss.*field); },
          [field](TrainConfig& c, const KeyValue& kv, const std::string& s) { c.loss.*field = parse_number(kv, s); }};
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      count_key("views", "training views per scene", &TrainConfig::views),
      count_key("rays_per_view", "rays drawn per view and step", &TrainConfig::rays_per_view),
      count_key("n_coarse", "stratified samples per ray", &TrainConfig::n_coarse),
      count_key("n_fine", "importance samples per ray", &TrainConfig::n_fine),
      real_key("mask_ratio", "fraction of point groups dropped", &TrainConfig::mask_ratio),
      count_key("mask_groups", "point groups for masking", &TrainConfig::mask_groups),
      count_key("mask_group_size", "points per masking group", &TrainConfig::mask_group_size),
      count_key("cloud_points", "encoder input cloud size", &TrainConfig::cloud_points),
      real_key("lr", "initial learning rate", &TrainConfig::lr),
      real_key("weight_decay", "decoupled weight decay", &TrainConfig::weight_decay),
      real_key("lr_decay", "learning-rate factor per step", &TrainConfig::lr_decay),
      count_key("steps", "optimizer steps", &TrainConfig::steps),
      {"seed", "random seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
       [](TrainConfig& c, const KeyValue& kv, const std::string& s) { c.seed = parse_count(kv, s); }},
      {"resolutions", "feature volume resolutions, ascending",
       [](const TrainConfig& c) { return join(c.resolutions); },
       [](TrainConfig& c, const KeyValue& kv, const std::string& s) { c.resolutions = parse_count_list(kv, s); }},
      count_key("channels", "feature channels per volume level", &TrainConfig::channels),
      count_key("encoder_hidden", "point encoder hidden width", &TrainConfig::encoder_hidden),
      real_key("init_inv_sharpness", "initial 1/h of the SDF sigmoid", &TrainConfig::init_inv_sharpness),
      count_key("eikonal_points", "Eikonal points per step (0 = all samples)", &TrainConfig::eikonal_points),
      {"holdout", "view ids excluded from training", [](const TrainConfig& c) { return join(c.holdout); },
       [](TrainConfig& c, const KeyValue& kv, const std::string& s) { c.holdout = parse_count_list(kv, s); }},
      loss_key("lambda_color", "color loss weight", &LossWeights::color),
      loss_key("lambda_depth", "depth loss weight", &LossWeights::depth),
      loss_key("lambda_eikonal", "Eikonal loss weight", &LossWeights::eikonal),
      loss_key("lambda_near", "near-surface SDF loss weight", &LossWeights::near_surface),
      loss_key("lambda_free", "free-space SDF loss weight", &LossWeights::free_space),
      loss_key("near_threshold", "near-surface band t (world units)", &LossWeights::threshold),
      loss_key("free_steepness", "free-space penalty steepness", &LossWeights::steepness),
      {"behind_cutoff", "drop SDF samples deeper than this behind the surface (inf = keep all)",
       [](const TrainConfig& c) {
         return std::isinf(c.loss.behind_cutoff) ? std::string("inf") : fmt17(c.loss.behind_cutoff);
       },
       [](TrainConfig& c, const KeyValue& kv, const std::string& s) {
         c.loss.behind_cutoff =
             kv.value == "inf" ? std::numeric_limits<double>::infinity() : parse_number(kv, s);
       }},
      {"miss_free_space", "1: samples on rays without valid depth join the free-space term (0 = off)",
       [](const TrainConfig& c) { return std::string(c.loss.miss_free_space ? "1" : "0"); },
       [](TrainConfig& c, const KeyValue& kv, const std::string& s) {
         const long long v = parse_integer(kv, s);
         if (v != 0 && v != 1) throw ConfigError(s + ":" + std::to_string(kv.line) + ": '" + kv.key + "' must be 0 or 1");
         c.loss.miss_free_space = v == 1;
       }},
  };
  return keys;
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (views < 1) fail("views must be >= 1");
  if (rays_per_view < 1) fail("rays_per_view must be >= 1");
  if (n_coarse < 2) fail("n_coarse must be >= 2");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) fail("mask_ratio must lie in [0, 1)");
  if (mask_groups < 1 || mask_group_size < 1) fail("mask_groups and mask_group_size must be >= 1");
  if (cloud_points < 1) fail("cloud_points must be >= 1");
  if (steps < 1) fail("steps must be >= 1");
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must lie in (0, 1]");
  if (resolutions.empty()) fail("resolutions must not be empty");
  for (std::size_t i = 0; i < resolutions.size(); ++i) {
    if (resolutions[i] < 1 || (i && resolutions[i] <= resolutions[i - 1])) {
      fail("resolutions must be positive and strictly ascending");
    }
  }
  if (channels < 1 || encoder_hidden < 1) fail("channels and encoder_hidden must be >= 1");
  if (!(init_inv_sharpness > 0.0)) fail("init_inv_sharpness must be > 0");
  try {
    loss.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

void apply_config(TrainConfig& config, const std::vector<KeyValue>& entries, const std::string& source) {
  for (const KeyValue& kv : entries) {
    const auto& keys = config_keys();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return kv.key == k.name; });
    if (it == keys.end()) {
      throw ConfigError((kv.line ? source + ":" + std::to_string(kv.line) : source) + ": unknown key '" + kv.key +
                        "'");
    }
    it->set(config, kv, source);
  }
}

TrainConfig parse_train_config(const std::string& text, const std::string& source) {
  TrainConfig c;
  apply_config(c, parse_key_values(text, source), source);
  c.validate();
  return c;
}

std::string format_train_config(const TrainConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) out += std::string(k.name) + " = " + k.get(config) + "\n";
  return out;
}

std::string train_config_help() {
  const TrainConfig defaults;
  std::string out;
  char buf[256];
  for (const auto& k : config_keys()) {
    std::snprintf(buf, sizeof buf, "  %-20s %-44s [default: %s]\n", k.name, k.help, k.get(defaults).c_str());
    out += buf;
  }
  return out;
}

double lr_at(std::size_t step, double lr0, double gamma) { return lr0 * std::pow(gamma, static_cast<double>(step)); }

void adamw_step(const std::vector<NamedTensor>& params, AdamState& state, const AdamWOptions& o,
                const std::vector<std::string>& no_decay) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adamw: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor.numel()) {
      throw ShapeError("adamw: state of '" + params[i].name + "' does not match its shape");
    }
    const auto g = params[i].tensor.grad();
    if (!all_finite(g)) throw NonFiniteError("non-finite gradient in parameter '" + params[i].name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    auto val = p.mutable_values();
    const auto g = p.grad();
    const bool decay = std::find(no_decay.begin(), no_decay.end(), params[i].name) == no_decay.end();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < val.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      if (decay) val[k] *= 1.0 - o.lr * o.weight_decay;
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * gk;
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * gk * gk;
      val[k] -= o.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + o.eps);
    }
  }
}

Model::Model(const TrainConfig& config, const Aabb& volume_box) : box(volume_box) {
  Rng rng(derive_seed(config.seed, 1000));
  encoder = PointEncoder(config.channels, config.encoder_hidden, rng);
  fill = DenseFill(config.resolutions.size(), config.channels, rng);
  NeuralFieldConfig fc;
  fc.feature_dim = config.channels * config.resolutions.size();
  fc.inv_sharpness = config.init_inv_sharpness;
  field = NeuralField(fc, box, rng);
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  encoder.collect(out);
  fill.collect(out);
  field.collect(out);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

FeatureVolumePyramid Model::build_volume(const ColoredPointCloud& cloud,
                                         const std::vector<std::size_t>& resolutions) const {
  return fill.apply(pool_to_pyramid(cloud, encoder.encode(cloud, box), resolutions, box));
}

RayBatch sample_rays(const std::vector<RgbdFrame>& frames, const std::vector<std::size_t>& views, const Aabb& box,
                     std::size_t rays_per_view, std::uint64_t seed) {
  RayBatch b;
  for (std::size_t vi = 0; vi < views.size(); ++vi) {
    const RgbdFrame& f = frames.at(views[vi]);
    const std::size_t w = static_cast<std::size_t>(f.intrinsics.width);
    const std::size_t pixels = w * static_cast<std::size_t>(f.intrinsics.height);
    for (std::size_t px : sample_without_replacement(pixels, rays_per_view, derive_seed(seed, vi))) {
      const double u = static_cast<double>(px % w);
      const double v = static_cast<double>(px / w);
      Ray ray = generate_ray(u, v, f.intrinsics, f.pose);
      const auto bounds = ray_aabb(ray, box);
      if (!bounds) continue;
      ray.z_near = bounds->first;
      ray.z_far = bounds->second;
      b.rays.push_back(ray);
      for (int c = 0; c < 3; ++c) b.color.push_back(f.color.at(px % w, px / w, c));
      const double d = f.depth.at(px % w, px / w);
      b.depth.push_back(d);
      b.valid.push_back(d > 0.0 ? 1 : 0);
      b.view.push_back(views[vi]);
      b.pixel.push_back(px);
    }
  }
  return b;
}

StepSeeds step_seeds(std::uint64_t seed, std::size_t step) {
  const std::uint64_t base = derive_seed(seed, 1'000'000 + step);
  return {derive_seed(base, 0), derive_seed(base, 1), derive_seed(base, 2), derive_seed(base, 3)};
}

namespace {

void keep_buffers_on_heap() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

TrainSession::TrainSession(Dataset data, const TrainConfig& cfg) : config(cfg), dataset(std::move(data)) {
  keep_buffers_on_heap();
  config.validate();
  for (std::size_t i = 0; i < dataset.frames.size() && train_views.size() < config.views; ++i) {
    if (std::find(config.holdout.begin(), config.holdout.end(), i) == config.holdout.end()) train_views.push_back(i);
  }
  if (train_views.size() < config.views) {
    throw ConfigError("config: " + std::to_string(config.views) + " training views requested but the dataset has " +
                      std::to_string(train_views.size()) + " outside the held-out set");
  }
  std::vector<RgbdFrame> frames;
  for (std::size_t v : train_views) frames.push_back(dataset.frames[v]);
  cloud = build_cloud(frames, config.cloud_points, derive_seed(config.seed, 2000));
  model = Model(config, dataset.scene.box);
}

LossReport forward_loss(const TrainSession& s, std::size_t step) {
  const TrainConfig& c = s.config;
  const StepSeeds seeds = step_seeds(c.seed, step);
  const MaskResult masked = mask_points(s.cloud, c.mask_groups, c.mask_group_size, c.mask_ratio, seeds.mask);
  const FeatureVolumePyramid volume = s.model.build_volume(masked.cloud, c.resolutions);
  const RayBatch batch = sample_rays(s.dataset.frames, s.train_views, s.model.box, c.rays_per_view, seeds.rays);
  if (batch.rays.empty()) throw TrainingError("step " + std::to_string(step) + ": no training ray hits the volume");
  const RenderResult r = render_rays(s.model.field, &volume, batch.rays, c.n_coarse, c.n_fine, seeds.samples);
  const std::size_t rays = batch.rays.size();

  LossParts parts;
  const LossWeights& w = c.loss;
  if (w.color > 0.0) parts.color = color_loss(slice(r.rgbd, 1, 0, 3), batch.color);
  if (w.depth > 0.0) parts.depth = depth_loss(reshape(slice(r.rgbd, 1, 3, 4), {rays}), batch.depth, batch.valid);
  if (w.near_surface > 0.0 || w.free_space > 0.0) {
    SdfSupervision sup = sdf_supervision(r.sdf, r.z, r.offsets, batch.depth, batch.valid, w);
    if (w.near_surface > 0.0) parts.near_surface = sup.near_surface;
    if (w.free_space > 0.0) parts.free_space = sup.free_space;
  }
  if (w.eikonal > 0.0) {
    std::vector<Vec3> pts;
    if (c.eikonal_points == 0 || c.eikonal_points >= r.positions.size()) {
      pts = r.positions;
    } else {
      for (std::size_t i : sample_without_replacement(r.positions.size(), c.eikonal_points, seeds.eikonal))
        pts.push_back(r.positions[i]);
    }
    parts.eikonal = eikonal_loss(s.model.field, &volume, s.model.box, pts).term;
  }
  LossReport report = total_loss(parts, w);
  for (double v : {report.color, report.depth, report.eikonal, report.near_surface, report.free_space}) {
    if (v < 0.0) throw TrainingError("step " + std::to_string(step) + ": negative loss term");
  }
  return report;
}

LossReport train_step(TrainSession& s) {
  const auto params = s.model.parameters();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  LossReport report = forward_loss(s, s.step);
  if (!std::isfinite(report.total)) {
    throw TrainingError("step " + std::to_string(s.step) + ": non-finite total loss");
  }
  report.total_tensor.backward();
  AdamWOptions o;
  o.lr = lr_at(s.step, s.config.lr, s.config.lr_decay);
  o.weight_decay = s.config.weight_decay;
  try {
    adamw_step(params, s.adam, o, {"log_h"});
  } catch (const NonFiniteError& e) {
    throw TrainingError("step " + std::to_string(s.step) + ": " + e.what());
  }
  ++s.step;
  return report;
}

std::string format_loss_line(std::size_t step, const LossReport& r, double lr) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %.17g %.17g %.17g %.17g %.17g", step, r.total, r.color, r.depth,
                r.eikonal, r.near_surface, r.free_space, lr);
  return buf;
}

void train(const std::filesystem::path& dataset_dir, const TrainConfig& config, const std::filesystem::path& out_dir,
           std::ostream* progress) {
  TrainSession session(read_dataset(dataset_dir), config);
  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / "config.txt", format_train_config(session.config));
  std::string log;
  for (std::size_t i = 0; i < config.steps; ++i) {
    const std::size_t step = session.step;
    const double lr = lr_at(step, config.lr, config.lr_decay);
    const LossReport r = train_step(session);
    const std::string line = format_loss_line(step, r, lr);
    log += line + "\n";
    if (progress) *progress << line << '\n' << std::flush;
  }
  write_file_atomic(out_dir / "loss.log", log);
  save_checkpoint(session, out_dir / "checkpoint.bin");
}

FrameRender render_view(const FieldModel& field, const FeatureVolumePyramid* pyramid, const Aabb& box,
                        const CameraIntrinsics& k, const Pose& pose, std::size_t n_coarse, std::size_t n_fine,
                        std::uint64_t seed) {
  NoGradGuard no_grad;
  const std::size_t w = static_cast<std::size_t>(k.width);
  const std::size_t h = static_cast<std::size_t>(k.height);
  FrameRender out;
  out.color = ColorImage(static_cast<int>(w), static_cast<int>(h));
  out.depth = DepthImage(static_cast<int>(w), static_cast<int>(h));
  out.weight_sum = DepthImage(static_cast<int>(w), static_cast<int>(h));
  std::vector<Ray> rays;
  std::vector<std::size_t> pixels;
  for (std::size_t px = 0; px < w * h; ++px) {
    Ray ray = generate_ray(static_cast<double>(px % w), static_cast<double>(px / w), k, pose);
    const auto bounds = ray_aabb(ray, box);
    if (!bounds) continue;
    ray.z_near = bounds->first;
    ray.z_far = bounds->second;
    rays.push_back(ray);
    pixels.push_back(px);
  }
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0, chunk = 0; start < rays.size(); start += kChunk, ++chunk) {
    const std::size_t n = std::min(kChunk, rays.size() - start);
    const std::vector<Ray> part(rays.begin() + static_cast<std::ptrdiff_t>(start),
                                rays.begin() + static_cast<std::ptrdiff_t>(start + n));
    const RenderResult r = render_rays(field, pyramid, part, n_coarse, n_fine, derive_seed(seed, chunk));
    const auto v = r.rgbd.values();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t px = pixels[start + i];
      const int x = static_cast<int>(px % w);
      const int y = static_cast<int>(px / w);
      for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = v[i * 4 + c];
      out.depth.at(x, y) = v[i * 4 + 3];
      out.weight_sum.at(x, y) = r.weight_sum(i);
    }
  }
  return out;
}

double psnr(const ColorImage& a, const ColorImage& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("psnr: image sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = a.rgb[i] - b.rgb[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.rgb.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double depth_rmse(const DepthImage& pred, const DepthImage& reference) {
  if (pred.width != reference.width || pred.height != reference.height) {
    throw std::invalid_argument("depth_rmse: image sizes differ");
  }
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < reference.depth.size(); ++i) {
    if (!(reference.depth[i] > 0.0)) continue;
    const double d = pred.depth[i] - reference.depth[i];
    acc += d * d;
    ++n;
  }
  return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
}

EvalResult evaluate(const TrainSession& s, const std::vector<std::size_t>& views) {
  NoGradGuard no_grad;
  const FeatureVolumePyramid volume = s.model.build_volume(s.cloud, s.config.resolutions);
  EvalResult out;
  for (std::size_t v : views) {
    if (v >= s.dataset.frames.size()) {
      throw std::out_of_range("eval: view " + std::to_string(v) + " does not exist (dataset has " +
                              std::to_string(s.dataset.frames.size()) + ")");
    }
    const RgbdFrame& f = s.dataset.frames[v];
    ViewMetrics m;
    m.view = v;
    m.render = render_view(s.model.field, &volume, s.model.box, f.intrinsics, f.pose, s.config.n_coarse,
                           s.config.n_fine, derive_seed(s.config.seed, 3000 + v));
    m.psnr = psnr(m.render.color, f.color);
    m.depth_rmse = depth_rmse(m.render.depth, f.depth);
    out.views.push_back(std::move(m));
  }
  return out;
}

std::string format_metrics(const EvalResult& result) {
  nlohmann::ordered_json j;
  j["views"] = nlohmann::json::array();
  double psnr_sum = 0.0, rmse_sum = 0.0;
  for (const auto& m : result.views) {
    j["views"].push_back({{"view", m.view}, {"psnr", m.psnr}, {"depth_rmse", m.depth_rmse}});
    psnr_sum += m.psnr;
    rmse_sum += m.depth_rmse;
  }
  const double n = result.views.empty() ? 1.0 : static_cast<double>(result.views.size());
  j["mean_psnr"] = psnr_sum / n;
  j["mean_depth_rmse"] = rmse_sum / n;
  return j.dump(2) + "\n";
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_bytes(tmp, bytes);
  std::filesystem::rename(tmp, path);
}

}  // namespace pcnr
