// Copyright 2026 The FusionSort Authors. All Rights Reserved.
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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fusionsort/tensor.hpp"

namespace fusionsort::io {

/// Hyperspectral raster stored band-sequential: band planes of height*width
/// 32-bit floats, one after another.
struct HyperCube {
  std::size_t bands = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  HyperCube() = default;
  HyperCube(std::size_t bands, std::size_t height, std::size_t width, float fill = 0.0f);

  float& at(std::size_t band, std::size_t y, std::size_t x) {
    return data[(band * height + y) * width + x];
  }
  float at(std::size_t band, std::size_t y, std::size_t x) const {
    return data[(band * height + y) * width + x];
  }
  std::size_t pixels() const { return height * width; }

  /// Throws unless extents are positive, sizes agree and values are finite.
  void validate() const;

  friend bool operator==(const HyperCube&, const HyperCube&) = default;
};

/// Per-pixel class indices, row-major, one byte each. Class 0 is background.
struct LabelMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(std::size_t height, std::size_t width, std::uint8_t fill = 0);

  std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }

  /// Throws LabelError if any value is >= num_classes.
  void check_classes(std::size_t num_classes) const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

// "HSC1" magic, then little-endian u32 bands, height, width, then the
// little-endian float32 raster.
inline constexpr std::size_t kCubeHeaderBytes = 16;

std::vector<std::uint8_t> encode_cube(const HyperCube& cube);
HyperCube decode_cube(std::span<const std::uint8_t> bytes);
void write_cube(const HyperCube& cube, const std::filesystem::path& path);
HyperCube read_cube(const std::filesystem::path& path);

/// Binary PPM (P6, maxval 255) <-> Tensor [1,3,H,W] in [0,1]. Encoding
/// rounds to the nearest 8-bit level.
std::vector<std::uint8_t> encode_ppm(const Tensor& rgb);
Tensor decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const Tensor& rgb, const std::filesystem::path& path);
Tensor read_ppm(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255) holding raw class indices.
std::vector<std::uint8_t> encode_pgm(const LabelMask& mask);
LabelMask decode_pgm(std::span<const std::uint8_t> bytes, std::size_t num_classes);
void write_pgm(const LabelMask& mask, const std::filesystem::path& path);
LabelMask read_pgm(const std::filesystem::path& path, std::size_t num_classes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`, so a
/// failed write never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Synthetic stand-in for paired RGB + hyperspectral waste imagery.

struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::size_t count = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t bands = 9;
  std::size_t num_classes = 3;
};

struct SyntheticSample {
  HyperCube cube;
  Tensor rgb;  // [1,3,H,W], multiples of 1/255
  LabelMask mask;
};

inline constexpr double kSyntheticNoiseSigma = 0.05;
inline constexpr double kBackgroundLevel = 0.1;

/// Noise-free spectrum of class k. Background (k = 0) is flat; class k >= 1
/// is a unit Gaussian bump centred at band k * bands / num_classes.
std::vector<double> class_signature(std::size_t k, std::size_t bands, std::size_t num_classes);
std::array<std::uint8_t, 3> class_color(std::size_t k);

/// Deterministic in `seed`. Each image holds one to three axis-aligned
/// rectangles of foreground classes on background.
std::vector<SyntheticSample> generate_synthetic_dataset(const SyntheticOptions& options);

}  // namespace fusionsort::io
