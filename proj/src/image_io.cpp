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

#include "pcnr/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace pcnr {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in, const std::filesystem::path& path) {
  std::string token;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> token;
  if (token.empty()) throw ImageIoError(path.string() + ": truncated header");
  return token;
}

int parse_extent(const std::string& token, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used != token.size() || v <= 0) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw ImageIoError(path.string() + ": bad image extent '" + token + "'");
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageIoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const ColorImage& image) {
  auto out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.rgb.size());
  std::transform(image.rgb.begin(), image.rgb.end(), bytes.begin(), [](double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageIoError("write failed: " + path.string());
}

ColorImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  if (header_token(in, path) != "P6") throw ImageIoError(path.string() + ": not a binary PPM (P6)");
  const int w = parse_extent(header_token(in, path), path);
  const int h = parse_extent(header_token(in, path), path);
  if (header_token(in, path) != "255") throw ImageIoError(path.string() + ": only 8-bit PPM is supported");
  in.get();  // single whitespace before the raster
  ColorImage image(w, h);
  std::vector<unsigned char> bytes(image.rgb.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw ImageIoError(path.string() + ": truncated raster (" + std::to_string(in.gcount()) + " of " +
                       std::to_string(bytes.size()) + " bytes)");
  }
  std::transform(bytes.begin(), bytes.end(), image.rgb.begin(),
                 [](unsigned char b) { return static_cast<double>(b) / 255.0; });
  return image;
}

void write_pfm(const std::filesystem::path& path, const DepthImage& image) {
  auto out = open_out(path);
  out << "Pf\n" << image.width << ' ' << image.height << "\n-1.0\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 4);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(image.at(x, y)));
      for (int b = 0; b < 4; ++b) row[static_cast<std::size_t>(x) * 4 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw ImageIoError("write failed: " + path.string());
}

DepthImage read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  if (header_token(in, path) != "Pf") throw ImageIoError(path.string() + ": not a grayscale PFM (Pf)");
  const int w = parse_extent(header_token(in, path), path);
  const int h = parse_extent(header_token(in, path), path);
  const std::string scale_token = header_token(in, path);
  double scale = 0.0;
  try {
    scale = std::stod(scale_token);
  } catch (const std::exception&) {
    throw ImageIoError(path.string() + ": bad PFM scale '" + scale_token + "'");
  }
  if (!(scale < 0.0)) throw ImageIoError(path.string() + ": only little-endian PFM (negative scale) is supported");
  in.get();
  DepthImage image(w, h);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 4);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (in.gcount() != static_cast<std::streamsize>(row.size())) {
      throw ImageIoError(path.string() + ": truncated raster at row " + std::to_string(y));
    }
    for (int x = 0; x < w; ++x) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(row[static_cast<std::size_t>(x) * 4 + b]) << (8 * b);
      image.at(x, y) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return image;
}

}  // namespace pcnr
