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

// 8-bit binary PPM (P6) color images and little-endian grayscale PFM depth.
#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace pcnr {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major H x W x 3, values in [0, 1]. Row 0 is the top of the image.
struct ColorImage {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;

  ColorImage() = default;
  ColorImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.0) {}

  double& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Row-major H x W. Row 0 is the top of the image.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0) {}

  double& at(int x, int y) { return depth[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
};

/// Channel values are clamped to [0, 1] and rounded to the nearest of 256 levels.
void write_ppm(const std::filesystem::path& path, const ColorImage& image);
ColorImage read_ppm(const std::filesystem::path& path);

/// "Pf" grayscale, scale -1.0 (little-endian), rows stored bottom to top as the
/// format prescribes. Values are narrowed to 32-bit floats.
void write_pfm(const std::filesystem::path& path, const DepthImage& image);
DepthImage read_pfm(const std::filesystem::path& path);

}  // namespace pcnr
