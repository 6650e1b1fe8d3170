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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <set>

#include "fusionsort/checkpoint.hpp"
#include "fusionsort/data_io.hpp"
#include "fusionsort/errors.hpp"
#include "fusionsort/tape.hpp"
#include "test_util.hpp"

namespace io = fusionsort::io;
using fusionsort::Shape;
using fusionsort::Tensor;

namespace {

io::HyperCube random_cube(std::mt19937_64& rng, std::size_t bands, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<float> dist(-3.0f, 3.0f);
  io::HyperCube cube(bands, h, w);
  for (float& v : cube.data) v = dist(rng);
  return cube;
}

Tensor random_rgb(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_int_distribution<int> level(0, 255);
  Tensor t({1, 3, h, w}, 0.0);
  for (double& v : t.data()) v = level(rng) / 255.0;
  return t;
}

io::LabelMask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, int k) {
  std::uniform_int_distribution<int> dist(0, k - 1);
  io::LabelMask m(h, w);
  for (auto& v : m.labels) v = static_cast<std::uint8_t>(dist(rng));
  return m;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

TEST(Cube, RoundTripThroughFileIsBitExact) {
  std::mt19937_64 rng(1);
  const io::HyperCube cube = random_cube(rng, 9, 4, 4);
  testutil::TempDir dir("cube");
  io::write_cube(cube, dir.file("a.hsc"));
  const io::HyperCube back = io::read_cube(dir.file("a.hsc"));
  EXPECT_EQ(back, cube);
  EXPECT_EQ(std::memcmp(back.data.data(), cube.data.data(), cube.data.size() * sizeof(float)), 0);
}

TEST(Cube, HeaderLayoutIsLittleEndian) {
  io::HyperCube cube(2, 3, 258, 0.5f);
  const auto bytes = io::encode_cube(cube);
  ASSERT_EQ(bytes.size(), io::kCubeHeaderBytes + 2 * 3 * 258 * 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "HSC1");
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[8], 3);
  EXPECT_EQ(bytes[12], 2);
  EXPECT_EQ(bytes[13], 1);
  // 0.5f is 0x3F000000.
  EXPECT_EQ(bytes[16], 0x00);
  EXPECT_EQ(bytes[19], 0x3F);
}

TEST(Cube, BadMagicIsRejected) {
  auto bytes = io::encode_cube(io::HyperCube(1, 2, 2, 1.0f));
  std::memcpy(bytes.data(), "XXXX", 4);
  try {
    io::decode_cube(bytes);
    FAIL() << "expected FormatError";
  } catch (const fusionsort::FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Cube, FileSizeIsHeaderPlusFloatPayload) {
  testutil::TempDir dir("cube_size");
  io::write_cube(io::HyperCube(224, 8, 8, 0.25f), dir.file("big.hsc"));
  EXPECT_EQ(std::filesystem::file_size(dir.file("big.hsc")), 16u + 224u * 8u * 8u * 4u);
  EXPECT_EQ(std::filesystem::file_size(dir.file("big.hsc")), 57360u);
}

TEST(Cube, NonFiniteValueIsRejectedWithOffset) {
  io::HyperCube cube(1, 2, 2, 1.0f);
  auto bytes = io::encode_cube(cube);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + 16 + 8, &nan, 4);
  try {
    io::decode_cube(bytes);
    FAIL() << "expected FormatError";
  } catch (const fusionsort::FormatError& e) {
    EXPECT_EQ(e.offset(), 24u);
  }
}

TEST(Cube, TrailingBytesAreRejected) {
  auto bytes = io::encode_cube(io::HyperCube(1, 2, 2, 1.0f));
  bytes.push_back(0);
  EXPECT_THROW(io::decode_cube(bytes), fusionsort::FormatError);
}

TEST(Ppm, AllWhiteDecodesToOnes) {
  std::vector<std::uint8_t> bytes = bytes_of("P6\n2 2\n255\n");
  bytes.insert(bytes.end(), 12, 255);
  EXPECT_EQ(io::decode_ppm(bytes), Tensor({1, 3, 2, 2}, 1.0));
}

TEST(Ppm, RoundTripIsBitExactOnByteLevels) {
  std::mt19937_64 rng(2);
  const Tensor rgb = random_rgb(rng, 5, 7);
  EXPECT_EQ(io::decode_ppm(io::encode_ppm(rgb)), rgb);
  testutil::TempDir dir("ppm");
  io::write_ppm(rgb, dir.file("x.ppm"));
  EXPECT_EQ(io::read_ppm(dir.file("x.ppm")), rgb);
}

TEST(Ppm, AsciiVariantAndOtherMaxvalAreRejected) {
  EXPECT_THROW(io::decode_ppm(bytes_of("P3\n1 1\n255\n1 2 3\n")), fusionsort::FormatError);
  std::vector<std::uint8_t> deep = bytes_of("P6\n1 1\n65535\n");
  deep.insert(deep.end(), 6, 0);
  EXPECT_THROW(io::decode_ppm(deep), fusionsort::FormatError);
  std::vector<std::uint8_t> shallow = bytes_of("P6\n1 1\n15\n");
  shallow.insert(shallow.end(), 3, 0);
  EXPECT_THROW(io::decode_ppm(shallow), fusionsort::FormatError);
}

TEST(Pgm, ValueAtClassCountIsOutOfRange) {
  std::vector<std::uint8_t> bytes = bytes_of("P5\n2 1\n255\n");
  bytes.push_back(3);
  bytes.push_back(7);
  EXPECT_THROW(io::decode_pgm(bytes, 7), fusionsort::LabelError);
  EXPECT_EQ(io::decode_pgm(bytes, 8).at(0, 1), 7);
}

TEST(Pgm, AsciiVariantIsRejected) {
  EXPECT_THROW(io::decode_pgm(bytes_of("P2\n1 1\n255\n0\n"), 2), fusionsort::FormatError);
}

TEST(Pgm, MaskRoundTripIsIdentical) {
  std::mt19937_64 rng(3);
  const io::LabelMask mask = random_mask(rng, 6, 9, 7);
  testutil::TempDir dir("pgm");
  io::write_pgm(mask, dir.file("m.pgm"));
  EXPECT_EQ(io::read_pgm(dir.file("m.pgm"), 7), mask);
}

TEST(Formats, EverySingleByteTruncationIsRejected) {
  std::mt19937_64 rng(4);
  const auto cube = io::encode_cube(random_cube(rng, 3, 3, 2));
  const auto ppm = io::encode_ppm(random_rgb(rng, 3, 2));
  const auto pgm = io::encode_pgm(random_mask(rng, 3, 4, 5));
  fusionsort::ParameterStore store;
  store.add("b.weight", Tensor({2, 3}, 0.5));
  store.add("a.bias", Tensor({3}, -1.0));
  store.add("a.running_var", Tensor({3}, 1.0), false);
  const auto ckpt = io::encode_checkpoint("modality=fused widths=16,32", store);

  for (std::size_t n = 0; n < cube.size(); ++n) {
    EXPECT_THROW(io::decode_cube({cube.data(), n}), fusionsort::FormatError) << "cube cut at " << n;
  }
  for (std::size_t n = 0; n < ppm.size(); ++n) {
    EXPECT_THROW(io::decode_ppm({ppm.data(), n}), fusionsort::FormatError) << "ppm cut at " << n;
  }
  for (std::size_t n = 0; n < pgm.size(); ++n) {
    EXPECT_THROW(io::decode_pgm({pgm.data(), n}, 5), fusionsort::FormatError) << "pgm cut at " << n;
  }
  for (std::size_t n = 0; n < ckpt.size(); ++n) {
    EXPECT_THROW(io::decode_checkpoint({ckpt.data(), n}), fusionsort::FormatError) << "checkpoint cut at " << n;
  }
}

TEST(Formats, TruncatedCubeMessageNamesTheOffset) {
  const auto bytes = io::encode_cube(io::HyperCube(2, 2, 2, 1.0f));
  try {
    io::decode_cube({bytes.data(), bytes.size() - 3});
    FAIL() << "expected FormatError";
  } catch (const fusionsort::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(Formats, MissingFileIsAnIoError) {
  EXPECT_THROW(io::read_cube("/nonexistent/dir/cube.hsc"), fusionsort::IoError);
}

TEST(Checkpoint, RoundTripRestoresEveryValueBitExactly) {
  std::mt19937_64 rng(5);
  fusionsort::ParameterStore store;
  store.add("z.last", testutil::random_tensor(rng, {4, 2, 3, 3}));
  store.add("a.first", testutil::random_tensor(rng, {5}));
  store.add("m.stats", testutil::random_tensor(rng, {5}), false);
  store.at("a.first").value[0] = -0.0;
  store.at("a.first").value[1] = std::numeric_limits<double>::denorm_min();
  testutil::TempDir dir("ckpt");
  io::write_checkpoint("cfg text", store, dir.file("c.ckpt"));
  const io::Checkpoint ckpt = io::read_checkpoint(dir.file("c.ckpt"));
  EXPECT_EQ(ckpt.config, "cfg text");
  ASSERT_EQ(ckpt.entries.size(), 3u);
  EXPECT_EQ(ckpt.entries[0].name, "a.first");
  EXPECT_EQ(ckpt.entries[1].name, "m.stats");
  EXPECT_FALSE(ckpt.entries[1].trainable);
  EXPECT_EQ(ckpt.entries[2].name, "z.last");

  fusionsort::ParameterStore fresh;
  fresh.add("z.last", Tensor({4, 2, 3, 3}));
  fresh.add("a.first", Tensor({5}));
  fresh.add("m.stats", Tensor({5}), false);
  io::restore_parameters(ckpt, fresh);
  for (const char* name : {"z.last", "a.first", "m.stats"}) {
    const Tensor& a = store.at(name).value;
    const Tensor& b = fresh.at(name).value;
    ASSERT_EQ(a.shape(), b.shape());
    EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)), 0) << name;
  }
  EXPECT_TRUE(std::signbit(fresh.at("a.first").value[0]));
}

TEST(Checkpoint, ManifestIsTextThenDataMarker) {
  fusionsort::ParameterStore store;
  store.add("w", Tensor({2}, 1.0));
  const auto bytes = io::encode_checkpoint("k=v", store);
  const std::string text(bytes.begin(), bytes.end());
  EXPECT_EQ(text.rfind("FUSIONSORT-CHECKPOINT 1\nconfig k=v\n", 0), 0u);
  EXPECT_NE(text.find("\nDATA\n"), std::string::npos);
  EXPECT_EQ(bytes.size(), text.find("\nDATA\n") + 6 + 2 * sizeof(double));
}

TEST(Checkpoint, ShapeMismatchFailsBeforeAnyWrite) {
  fusionsort::ParameterStore store;
  store.add("a", Tensor({2}, 1.0));
  store.add("b", Tensor({3}, 2.0));
  const io::Checkpoint ckpt = io::decode_checkpoint(io::encode_checkpoint("", store));

  fusionsort::ParameterStore target;
  target.add("a", Tensor({2}, 7.0));
  target.add("b", Tensor({4}, 7.0));
  EXPECT_THROW(io::restore_parameters(ckpt, target), fusionsort::Error);
  EXPECT_EQ(target.at("a").value, Tensor({2}, 7.0));

  fusionsort::ParameterStore missing;
  missing.add("a", Tensor({2}, 7.0));
  EXPECT_THROW(io::restore_parameters(ckpt, missing), fusionsort::Error);
  EXPECT_EQ(missing.at("a").value, Tensor({2}, 7.0));
}

TEST(AtomicWrite, ReplacesContentAndLeavesNoTemporaries) {
  testutil::TempDir dir("atomic");
  const std::vector<std::uint8_t> first{1, 2, 3}, second{9};
  io::write_file_atomic(dir.file("f.bin"), first);
  io::write_file_atomic(dir.file("f.bin"), second);
  EXPECT_EQ(io::read_file(dir.file("f.bin")), second);
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++entries;
  EXPECT_EQ(entries, 1u);
  EXPECT_THROW(io::write_file_atomic(dir.file("missing_dir/f.bin"), first), fusionsort::IoError);
}

TEST(Synthetic, SameSeedGivesIdenticalDatasets) {
  io::SyntheticOptions opts;
  opts.seed = 42;
  opts.count = 4;
  const auto a = io::generate_synthetic_dataset(opts);
  const auto b = io::generate_synthetic_dataset(opts);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(io::encode_cube(a[i].cube), io::encode_cube(b[i].cube));
    EXPECT_EQ(a[i].rgb, b[i].rgb);
    EXPECT_EQ(a[i].mask, b[i].mask);
  }
  opts.seed = 43;
  EXPECT_NE(io::generate_synthetic_dataset(opts)[0].mask, a[0].mask);
}

TEST(Synthetic, EveryImageHoldsBackgroundAndForeground) {
  io::SyntheticOptions opts;
  opts.seed = 7;
  opts.count = 20;
  opts.num_classes = 4;
  for (const auto& s : io::generate_synthetic_dataset(opts)) {
    const std::set<int> present(s.mask.labels.begin(), s.mask.labels.end());
    EXPECT_TRUE(present.count(0));
    EXPECT_GE(present.size(), 2u);
    EXPECT_LT(*present.rbegin(), 4);
    EXPECT_EQ(s.cube.bands, 9u);
    EXPECT_EQ(s.rgb.shape(), (Shape{1, 3, 32, 32}));
    for (double v : s.rgb.data()) EXPECT_DOUBLE_EQ(std::round(v * 255.0), v * 255.0);
  }
}

TEST(Synthetic, SignaturePeaksAtItsCentreBand) {
  for (std::size_t bands : {9u, 16u, 224u}) {
    for (std::size_t k_n : {2u, 3u, 7u}) {
      const auto flat = io::class_signature(0, bands, k_n);
      for (double v : flat) EXPECT_DOUBLE_EQ(v, io::kBackgroundLevel);
      for (std::size_t k = 1; k < k_n; ++k) {
        const auto sig = io::class_signature(k, bands, k_n);
        const auto peak = static_cast<std::size_t>(std::max_element(sig.begin(), sig.end()) - sig.begin());
        const double centre = static_cast<double>(k * bands) / static_cast<double>(k_n);
        EXPECT_LE(std::abs(static_cast<double>(peak) - centre), 0.5) << "k=" << k << " bands=" << bands;
        EXPECT_NEAR(sig[peak], 1.0, 0.2);
      }
    }
  }
}

TEST(Synthetic, PixelSpectraSitNearTheirClassSignature) {
  io::SyntheticOptions opts;
  opts.seed = 3;
  opts.count = 2;
  for (const auto& s : io::generate_synthetic_dataset(opts)) {
    double worst = 0.0;
    for (std::size_t y = 0; y < s.mask.height; ++y) {
      for (std::size_t x = 0; x < s.mask.width; ++x) {
        const auto sig = io::class_signature(s.mask.at(y, x), s.cube.bands, opts.num_classes);
        for (std::size_t b = 0; b < s.cube.bands; ++b) worst = std::max(worst, std::abs(s.cube.at(b, y, x) - sig[b]));
      }
    }
    EXPECT_LT(worst, 8 * io::kSyntheticNoiseSigma);
  }
}

}  // namespace
