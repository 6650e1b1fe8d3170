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

#include "fusionsort/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "fusionsort/errors.hpp"

namespace fusionsort::io {

static_assert(std::endian::native == std::endian::little,
              "the binary formats are written with native little-endian copies");

HyperCube::HyperCube(std::size_t bands, std::size_t height, std::size_t width, float fill)
    : bands(bands), height(height), width(width), data(bands * height * width, fill) {}

void HyperCube::validate() const {
  if (bands == 0 || height == 0 || width == 0) {
    throw ShapeError("hyperspectral cube extents must be >= 1");
  }
  if (data.size() != bands * height * width) {
    throw ShapeError("hyperspectral cube holds " + std::to_string(data.size()) + " values, expected " +
                     std::to_string(bands * height * width));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericalError("hyperspectral cube value " + std::to_string(i) + " is not finite");
    }
  }
}

LabelMask::LabelMask(std::size_t height, std::size_t width, std::uint8_t fill)
    : height(height), width(width), labels(height * width, fill) {}

void LabelMask::check_classes(std::size_t num_classes) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw LabelError("label " + std::to_string(labels[i]) + " at pixel " + std::to_string(i) +
                       " is outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw ShapeError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_cube(const HyperCube& cube) {
  cube.validate();
  std::vector<std::uint8_t> out{'H', 'S', 'C', '1'};
  out.reserve(kCubeHeaderBytes + cube.data.size() * 4);
  put_u32(out, checked_u32(cube.bands, "band count"));
  put_u32(out, checked_u32(cube.height, "height"));
  put_u32(out, checked_u32(cube.width, "width"));
  const std::size_t at = out.size();
  out.resize(at + cube.data.size() * 4);
  std::memcpy(out.data() + at, cube.data.data(), cube.data.size() * 4);
  return out;
}

HyperCube decode_cube(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "HSC1", 4) != 0) {
    throw FormatError("cube: missing HSC1 magic", 0);
  }
  if (bytes.size() < kCubeHeaderBytes) {
    throw FormatError("cube: truncated header", bytes.size());
  }
  HyperCube cube;
  cube.bands = get_u32(bytes, 4);
  cube.height = get_u32(bytes, 8);
  cube.width = get_u32(bytes, 12);
  if (cube.bands == 0) throw FormatError("cube: band count is zero", 4);
  if (cube.height == 0) throw FormatError("cube: height is zero", 8);
  if (cube.width == 0) throw FormatError("cube: width is zero", 12);
  const std::size_t count = cube.bands * cube.height * cube.width;
  const std::size_t expected = kCubeHeaderBytes + count * 4;
  if (bytes.size() < expected) {
    throw FormatError("cube: truncated payload, expected " + std::to_string(expected) + " bytes, got " +
                          std::to_string(bytes.size()),
                      bytes.size());
  }
  if (bytes.size() > expected) {
    throw FormatError("cube: trailing bytes after raster", expected);
  }
  cube.data.resize(count);
  std::memcpy(cube.data.data(), bytes.data() + kCubeHeaderBytes, count * 4);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(cube.data[i])) {
      throw FormatError("cube: non-finite value", kCubeHeaderBytes + i * 4);
    }
  }
  return cube;
}

void write_cube(const HyperCube& cube, const std::filesystem::path& path) {
  write_file_atomic(path, encode_cube(cube));
}

HyperCube read_cube(const std::filesystem::path& path) { return decode_cube(read_file(path)); }

namespace {

struct NetpbmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t payload_offset = 0;
};

bool is_space(std::uint8_t c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t'; }

// Header tokens are separated by exactly one whitespace byte; comments are
// not accepted.
NetpbmHeader parse_netpbm(std::span<const std::uint8_t> b, char kind, const char* what) {
  const std::string fmt(what);
  if (b.size() < 2 || b[0] != 'P') throw FormatError(fmt + ": missing netpbm magic", 0);
  if (b[1] != static_cast<std::uint8_t>(kind)) {
    throw FormatError(fmt + ": unsupported netpbm variant P" + std::string(1, static_cast<char>(b[1])) +
                          ", expected binary P" + std::string(1, kind),
                      1);
  }
  std::size_t pos = 2;
  auto separator = [&]() {
    if (pos >= b.size()) throw FormatError(fmt + ": truncated header", pos);
    if (!is_space(b[pos])) throw FormatError(fmt + ": expected whitespace", pos);
    ++pos;
  };
  auto number = [&]() -> std::size_t {
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
      v = v * 10 + (b[pos] - '0');
      if (v > 1u << 24) throw FormatError(fmt + ": header value too large", start);
      ++pos;
    }
    if (pos == start) {
      throw FormatError(fmt + (pos >= b.size() ? ": truncated header" : ": expected a number"), pos);
    }
    return v;
  };
  NetpbmHeader h;
  separator();
  const std::size_t width_at = pos;
  h.width = number();
  separator();
  const std::size_t height_at = pos;
  h.height = number();
  separator();
  const std::size_t maxval_at = pos;
  const std::size_t maxval = number();
  separator();
  if (h.width == 0) throw FormatError(fmt + ": width is zero", width_at);
  if (h.height == 0) throw FormatError(fmt + ": height is zero", height_at);
  if (maxval != 255) {
    throw FormatError(fmt + ": maxval " + std::to_string(maxval) + " unsupported, expected 255", maxval_at);
  }
  h.payload_offset = pos;
  return h;
}

void check_payload(std::span<const std::uint8_t> b, const NetpbmHeader& h, std::size_t channels,
                   const char* what) {
  const std::size_t expected = h.payload_offset + h.width * h.height * channels;
  if (b.size() < expected) {
    throw FormatError(std::string(what) + ": truncated payload, expected " + std::to_string(expected) +
                          " bytes, got " + std::to_string(b.size()),
                      b.size());
  }
  if (b.size() > expected) throw FormatError(std::string(what) + ": trailing bytes", expected);
}

std::vector<std::uint8_t> netpbm_header(char kind, std::size_t width, std::size_t height) {
  const std::string s = "P" + std::string(1, kind) + "\n" + std::to_string(width) + " " +
                        std::to_string(height) + "\n255\n";
  return {s.begin(), s.end()};
}

}  // namespace

std::vector<std::uint8_t> encode_ppm(const Tensor& rgb) {
  require_rank(rgb, 4, "encode_ppm");
  if (rgb.dim(0) != 1 || rgb.dim(1) != 3) {
    throw ShapeError("encode_ppm: expected [1,3,H,W], got " + shape_to_string(rgb.shape()));
  }
  const std::size_t h = rgb.dim(2), w = rgb.dim(3);
  auto out = netpbm_header('6', w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb.at(0, c, y, x), 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
  return out;
}

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  const NetpbmHeader h = parse_netpbm(bytes, '6', "ppm");
  check_payload(bytes, h, 3, "ppm");
  Tensor rgb(Shape{1, 3, h.height, h.width});
  std::size_t pos = h.payload_offset;
  for (std::size_t y = 0; y < h.height; ++y)
    for (std::size_t x = 0; x < h.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) rgb.at(0, c, y, x) = bytes[pos++] / 255.0;
  return rgb;
}

void write_ppm(const Tensor& rgb, const std::filesystem::path& path) {
  write_file_atomic(path, encode_ppm(rgb));
}

Tensor read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

std::vector<std::uint8_t> encode_pgm(const LabelMask& mask) {
  if (mask.height == 0 || mask.width == 0 || mask.labels.size() != mask.height * mask.width) {
    throw ShapeError("encode_pgm: inconsistent mask extents");
  }
  auto out = netpbm_header('5', mask.width, mask.height);
  out.insert(out.end(), mask.labels.begin(), mask.labels.end());
  return out;
}

LabelMask decode_pgm(std::span<const std::uint8_t> bytes, std::size_t num_classes) {
  const NetpbmHeader h = parse_netpbm(bytes, '5', "pgm");
  check_payload(bytes, h, 1, "pgm");
  LabelMask mask;
  mask.height = h.height;
  mask.width = h.width;
  mask.labels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), bytes.end());
  mask.check_classes(num_classes);
  return mask;
}

void write_pgm(const LabelMask& mask, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pgm(mask));
}

LabelMask read_pgm(const std::filesystem::path& path, std::size_t num_classes) {
  return decode_pgm(read_file(path), num_classes);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

std::vector<double> class_signature(std::size_t k, std::size_t bands, std::size_t num_classes) {
  std::vector<double> sig(bands, kBackgroundLevel);
  if (k == 0) return sig;
  const double centre = static_cast<double>(k * bands) / static_cast<double>(num_classes);
  const double width = std::max(1.0, static_cast<double>(bands) / (2.0 * static_cast<double>(num_classes)));
  for (std::size_t b = 0; b < bands; ++b) {
    const double d = (static_cast<double>(b) - centre) / width;
    sig[b] = std::exp(-0.5 * d * d);
  }
  return sig;
}

std::array<std::uint8_t, 3> class_color(std::size_t k) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette{{
      {40, 40, 40},
      {200, 60, 50},
      {60, 170, 80},
      {60, 90, 210},
      {220, 200, 60},
      {180, 80, 200},
      {70, 200, 210},
      {240, 140, 40},
  }};
  if (k < kPalette.size()) return kPalette[k];
  // Beyond the palette: a fixed, well spread hue walk.
  const auto r = static_cast<std::uint8_t>(37 * k % 256);
  const auto g = static_cast<std::uint8_t>(101 * k % 256);
  const auto b = static_cast<std::uint8_t>(173 * k % 256);
  return {r, g, b};
}

std::vector<SyntheticSample> generate_synthetic_dataset(const SyntheticOptions& opt) {
  if (opt.num_classes < 2 || opt.num_classes > 256) {
    throw ConfigError("synthetic data needs 2..256 classes");
  }
  if (opt.height < 8 || opt.width < 8) throw ConfigError("synthetic images must be at least 8x8");
  if (opt.bands < 1) throw ConfigError("synthetic cubes need at least one band");

  std::vector<std::vector<double>> signatures;
  for (std::size_t k = 0; k < opt.num_classes; ++k) {
    signatures.push_back(class_signature(k, opt.bands, opt.num_classes));
  }

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> noise(0.0, kSyntheticNoiseSigma);
  const std::size_t h = opt.height, w = opt.width;

  std::vector<SyntheticSample> out;
  out.reserve(opt.count);
  for (std::size_t i = 0; i < opt.count; ++i) {
    LabelMask mask(h, w, 0);
    const std::size_t rects = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    for (std::size_t r = 0; r < rects; ++r) {
      const auto cls = static_cast<std::uint8_t>(
          std::uniform_int_distribution<std::size_t>(1, opt.num_classes - 1)(rng));
      // At most half of each side, so background always survives.
      const std::size_t rh = std::uniform_int_distribution<std::size_t>(h / 8, h / 2)(rng);
      const std::size_t rw = std::uniform_int_distribution<std::size_t>(w / 8, w / 2)(rng);
      const std::size_t top = std::uniform_int_distribution<std::size_t>(0, h - rh)(rng);
      const std::size_t left = std::uniform_int_distribution<std::size_t>(0, w - rw)(rng);
      for (std::size_t y = top; y < top + rh; ++y)
        for (std::size_t x = left; x < left + rw; ++x) mask.at(y, x) = cls;
    }

    HyperCube cube(opt.bands, h, w);
    Tensor rgb(Shape{1, 3, h, w});
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t cls = mask.at(y, x);
        const auto& sig = signatures[cls];
        for (std::size_t b = 0; b < opt.bands; ++b) {
          cube.at(b, y, x) = static_cast<float>(sig[b] + noise(rng));
        }
        const auto color = class_color(cls);
        for (std::size_t c = 0; c < 3; ++c) rgb.at(0, c, y, x) = color[c] / 255.0;
      }
    out.push_back({std::move(cube), std::move(rgb), std::move(mask)});
  }
  return out;
}

}  // namespace fusionsort::io
