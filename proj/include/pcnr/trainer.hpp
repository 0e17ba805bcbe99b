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

// Pre-training loop: configuration, model assembly, AdamW, per-step ray
// batches, evaluation metrics and checkpoints.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcnr/camera.hpp"
#include "pcnr/config.hpp"
#include "pcnr/feature_volume.hpp"
#include "pcnr/losses.hpp"
#include "pcnr/neural_field.hpp"
#include "pcnr/scene.hpp"

namespace pcnr {

struct TrainConfig {
  std::size_t views = 5;
  std::size_t rays_per_view = 128;
  std::size_t n_coarse = 64;
  std::size_t n_fine = 64;
  double mask_ratio = 0.75;
  std::size_t mask_groups = 64;
  std::size_t mask_group_size = 64;
  std::size_t cloud_points = 4096;
  double lr = 1e-4;
  double weight_decay = 0.05;
  double lr_decay = 0.9995;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
  std::vector<std::size_t> resolutions{16, 32, 64};
  std::size_t channels = 16;
  std::size_t encoder_hidden = 32;
  double init_inv_sharpness = 0.3;
  /// Eikonal points per step drawn from the ray samples; 0 uses every sample.
  std::size_t eikonal_points = 1024;
  /// Views never used for training (evaluation views).
  std::vector<std::size_t> holdout{5};
  LossWeights loss;

  /// Throws ConfigError on an out-of-range value.
  void validate() const;
};

/// Applies "key = value" entries; unknown keys are rejected with their line.
void apply_config(TrainConfig& config, const std::vector<KeyValue>& entries, const std::string& source);
TrainConfig parse_train_config(const std::string& text, const std::string& source = "<config>");
/// Every key, one per line, values printed exactly.
std::string format_train_config(const TrainConfig& config);
/// Key, default and description for every key.
std::string train_config_help();

double lr_at(std::size_t step, double lr0, double gamma);

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decoupled decay p <- p (1 - lr wd), then the bias-corrected Adam update.
/// Parameters named in `no_decay` skip the decay. A non-finite gradient
/// anywhere rejects the whole step (NonFiniteError naming the parameter).
void adamw_step(const std::vector<NamedTensor>& params, AdamState& state, const AdamWOptions& options,
                const std::vector<std::string>& no_decay = {});

struct Model {
  Aabb box;
  PointEncoder encoder;
  DenseFill fill;
  NeuralField field;

  Model() = default;
  Model(const TrainConfig& config, const Aabb& box);

  /// Stable order: encoder, fill, sdf, color, log_h.
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;
  /// Encode, pool and fill.
  FeatureVolumePyramid build_volume(const ColoredPointCloud& cloud, const std::vector<std::size_t>& resolutions) const;
};

struct RayBatch {
  std::vector<Ray> rays;
  std::vector<double> color;   // [R, 3]
  std::vector<double> depth;   // [R]
  std::vector<std::uint8_t> valid;
  std::vector<std::size_t> view;
  std::vector<std::size_t> pixel;
};

/// Up to rays_per_view distinct pixels per view (rays missing the box are dropped).
RayBatch sample_rays(const std::vector<RgbdFrame>& frames, const std::vector<std::size_t>& views, const Aabb& box,
                     std::size_t rays_per_view, std::uint64_t seed);

/// Everything one step needs, fixed by the config seed and the step index.
struct StepSeeds {
  std::uint64_t mask;
  std::uint64_t rays;
  std::uint64_t samples;
  std::uint64_t eikonal;
};
StepSeeds step_seeds(std::uint64_t seed, std::size_t step);

struct TrainSession {
  TrainConfig config;
  Dataset dataset;
  std::vector<std::size_t> train_views;
  ColoredPointCloud cloud;  // unmasked, downsampled once
  Model model;
  AdamState adam;
  std::size_t step = 0;

  TrainSession(Dataset dataset, const TrainConfig& config);
};

/// Forward pass of the objective at `step` (no optimizer update).
LossReport forward_loss(const TrainSession& session, std::size_t step);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// forward_loss, backward, AdamW at lr_at(step); advances the step counter.
/// Throws TrainingError on a non-finite loss or gradient.
LossReport train_step(TrainSession& session);

/// "step total L_c L_d L_e L_s L_f lr"
std::string format_loss_line(std::size_t step, const LossReport& report, double lr);

/// Runs config.steps steps, writing loss.log, checkpoint.bin and config.txt into out_dir.
/// `progress` (may be null) receives every log line.
void train(const std::filesystem::path& dataset_dir, const TrainConfig& config, const std::filesystem::path& out_dir,
           std::ostream* progress = nullptr);

struct FrameRender {
  ColorImage color;
  DepthImage depth;         // unnormalized expected depth
  DepthImage weight_sum;
};

/// Full-frame rendering in chunks, without gradients. Pixels whose ray misses
/// the box render black with depth 0.
FrameRender render_view(const FieldModel& field, const FeatureVolumePyramid* pyramid, const Aabb& box,
                        const CameraIntrinsics& k, const Pose& pose, std::size_t n_coarse, std::size_t n_fine,
                        std::uint64_t seed);

double psnr(const ColorImage& a, const ColorImage& b);
/// RMSE over pixels with reference depth > 0; 0 when there are none.
double depth_rmse(const DepthImage& pred, const DepthImage& reference);

struct ViewMetrics {
  std::size_t view = 0;
  double psnr = 0.0;
  double depth_rmse = 0.0;
  FrameRender render;
};

struct EvalResult {
  std::vector<ViewMetrics> views;
};

/// Builds the unmasked volume from the training views and renders each requested view.
EvalResult evaluate(const TrainSession& session, const std::vector<std::size_t>& views);
std::string format_metrics(const EvalResult& result);

// Checkpoints: versioned little-endian binary.
//   "PCNRCKPT" u32 version u64 step u64 len config-text u64 count
//   per parameter: u64 len name u64 rank u64 dims... f64 values, f64 m, f64 v
//   u64 FNV-1a hash of all preceding bytes
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const TrainSession& session);
void save_checkpoint(const TrainSession& session, const std::filesystem::path& path);

struct CheckpointData {
  std::uint32_t version = 0;
  std::size_t step = 0;
  std::string config_text;
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> values, m, v;
  };
  std::vector<Entry> entries;
};

CheckpointData decode_checkpoint(const std::string& bytes, const std::string& source = "<checkpoint>");
CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Session with the stored config, parameters, moments and step. Throws
/// CheckpointError on any mismatch before touching model state.
TrainSession load_session(const std::filesystem::path& checkpoint, Dataset dataset);

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace pcnr
