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
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "fusionsort/errors.hpp"
#include "fusionsort/fusion.hpp"
#include "test_util.hpp"

namespace fusion = fusionsort::fusion;
namespace io = fusionsort::io;
using fusionsort::Shape;
using fusionsort::Tensor;

namespace {

using Frame = std::array<std::vector<double>, 3>;

// The two-band checkerboard from the hand-worked example, padded with a
// constant third band so the cube meets the three-band minimum.
io::HyperCube checker_cube() {
  io::HyperCube cube(3, 2, 2, 0.0f);
  const float spectra[4][2] = {{1, 0}, {0, 1}, {1, 0}, {0, 1}};
  for (std::size_t p = 0; p < 4; ++p) {
    cube.at(0, p / 2, p % 2) = spectra[p][0];
    cube.at(1, p / 2, p % 2) = spectra[p][1];
  }
  return cube;
}

io::HyperCube random_cube(std::mt19937_64& rng, std::size_t bands, std::size_t h, std::size_t w) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  io::HyperCube cube(bands, h, w);
  for (float& v : cube.data) v = dist(rng);
  return cube;
}

// Sum of squared reconstruction errors of centered spectra projected onto
// the span of an orthonormal frame.
double reconstruction_sse(const io::HyperCube& cube, const std::vector<double>& mean, const Frame& frame) {
  double sse = 0.0;
  std::vector<double> x(cube.bands);
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    for (std::size_t b = 0; b < cube.bands; ++b) x[b] = cube.data[b * cube.pixels() + p] - mean[b];
    std::vector<double> r = x;
    for (const auto& v : frame) {
      double dot = 0.0;
      for (std::size_t b = 0; b < cube.bands; ++b) dot += v[b] * x[b];
      for (std::size_t b = 0; b < cube.bands; ++b) r[b] -= dot * v[b];
    }
    for (double e : r) sse += e * e;
  }
  return sse;
}

Frame random_frame(std::mt19937_64& rng, std::size_t bands) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Frame f;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> v(bands);
    for (double& x : v) x = dist(rng);
    for (std::size_t j = 0; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t b = 0; b < bands; ++b) dot += v[b] * f[j][b];
      for (std::size_t b = 0; b < bands; ++b) v[b] -= dot * f[j][b];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    for (double& x : v) x /= std::sqrt(norm);
    f[k] = v;
  }
  return f;
}

TEST(Jacobi, ResidualsOrthonormalityAndOrder) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 16u}) {
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) a[i * n + j] = a[j * n + i] = dist(rng);
    double fro = 0.0;
    for (double v : a) fro += v * v;
    fro = std::sqrt(fro);
    const fusion::SymmetricEigen e = fusion::jacobi_eigen(a, n);
    for (std::size_t j = 0; j + 1 < n; ++j) EXPECT_GE(e.values[j], e.values[j + 1]);
    for (std::size_t k = 0; k < n; ++k) {
      double res = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double cv = 0.0;
        for (std::size_t j = 0; j < n; ++j) cv += a[i * n + j] * e.vector(j, k);
        res += std::pow(cv - e.values[k] * e.vector(i, k), 2);
      }
      EXPECT_LT(std::sqrt(res), 1e-9 * fro) << "n=" << n << " k=" << k;
      for (std::size_t l = 0; l < n; ++l) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += e.vector(i, k) * e.vector(i, l);
        EXPECT_NEAR(dot, k == l ? 1.0 : 0.0, 1e-12);
      }
    }
  }
}

TEST(Jacobi, DiagonalInputNeedsNoRotation) {
  const fusion::SymmetricEigen e = fusion::jacobi_eigen({1, 0, 0, 0, 3, 0, 0, 0, 2}, 3);
  EXPECT_EQ(e.values, (std::vector<double>{3, 2, 1}));
  EXPECT_DOUBLE_EQ(std::abs(e.vector(1, 0)), 1.0);
}

TEST(Jacobi, NonSquareInputIsRejected) {
  EXPECT_THROW(fusion::jacobi_eigen({1, 2, 3}, 2), fusionsort::ShapeError);
}

TEST(Pca, CheckerboardSpectra) {
  const fusion::PcaModel m = fusion::fit_pca(checker_cube());
  ASSERT_EQ(m.eigenvalues.size(), 3u);
  EXPECT_NEAR(m.eigenvalues[0], 0.5, 1e-15);
  EXPECT_NEAR(m.eigenvalues[1], 0.0, 1e-15);
  EXPECT_NEAR(m.eigenvalues[2], 0.0, 1e-15);
  EXPECT_NEAR(m.components[0][0], 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(m.components[0][1], -1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(m.components[0][2], 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.variance_retained, 1.0);
}

TEST(Pca, CheckerboardScoresAndNormalization) {
  const io::HyperCube cube = checker_cube();
  const fusion::PcaModel m = fusion::fit_pca(cube);
  const Tensor raw = fusion::pca_scores(cube, m);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(raw.at(0, 0, 0, 0), r, 1e-12);
  EXPECT_NEAR(raw.at(0, 0, 0, 1), -r, 1e-12);
  EXPECT_NEAR(raw.at(0, 0, 1, 0), r, 1e-12);
  EXPECT_NEAR(raw.at(0, 0, 1, 1), -r, 1e-12);
  const Tensor h3 = fusion::project_hyper3(cube, m);
  EXPECT_EQ(h3.shape(), (Shape{1, 3, 2, 2}));
  EXPECT_DOUBLE_EQ(h3.at(0, 0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(h3.at(0, 0, 0, 1), 0.0);
  EXPECT_DOUBLE_EQ(h3.at(0, 0, 1, 0), 1.0);
  EXPECT_DOUBLE_EQ(h3.at(0, 0, 1, 1), 0.0);
}

TEST(Pca, ConstantCubeHasZeroSpectrumAndHalfGrey) {
  const io::HyperCube cube(5, 3, 4, 0.75f);
  const fusion::PcaModel m = fusion::fit_pca(cube);
  for (double v : m.eigenvalues) EXPECT_EQ(v, 0.0);
  EXPECT_DOUBLE_EQ(m.variance_retained, 1.0);
  EXPECT_EQ(fusion::project_hyper3(cube, m), Tensor({1, 3, 3, 4}, 0.5));
}

TEST(Pca, ThreeFactorCubeRetainsAlmostAllVariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> unit(0.0, 1.0), noise(0.0, 1e-3);
  const std::size_t bands = 16, h = 16, w = 16;
  std::array<std::vector<double>, 3> loadings;
  for (auto& l : loadings) {
    l.resize(bands);
    for (double& v : l) v = unit(rng);
  }
  io::HyperCube cube(bands, h, w);
  for (std::size_t p = 0; p < h * w; ++p) {
    const double f[3] = {unit(rng), unit(rng), unit(rng)};
    for (std::size_t b = 0; b < bands; ++b) {
      double v = noise(rng);
      for (std::size_t k = 0; k < 3; ++k) v += f[k] * loadings[k][b];
      cube.data[b * h * w + p] = static_cast<float>(v);
    }
  }
  EXPECT_GT(fusion::fit_pca(cube).variance_retained, 0.99);
}

TEST(Pca, ComponentsAreOrthonormalSignedAndOrdered) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const fusion::PcaModel m = fusion::fit_pca(random_cube(rng, 3 + trial % 6, 3, 4));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (std::size_t b = 0; b < m.bands(); ++b) dot += m.components[i][b] * m.components[j][b];
        EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-9);
      }
      const auto& c = m.components[i];
      const auto big = std::max_element(c.begin(), c.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
      EXPECT_GT(*big, 0.0);
    }
    for (std::size_t j = 0; j + 1 < m.eigenvalues.size(); ++j) EXPECT_GE(m.eigenvalues[j], m.eigenvalues[j + 1]);
    for (double v : m.eigenvalues) EXPECT_GE(v, 0.0);
    EXPECT_GE(m.variance_retained, 0.0);
    EXPECT_LE(m.variance_retained, 1.0);
  }
}

TEST(Pca, ReconstructionBeatsRandomFrames) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> bands_dist(3, 8), side(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t h = side(rng), w = side(rng);
    if (h * w < 2) w = 2;
    const io::HyperCube cube = random_cube(rng, bands_dist(rng), h, w);
    const fusion::PcaModel m = fusion::fit_pca(cube);
    const Frame pca{m.components[0], m.components[1], m.components[2]};
    const double best = reconstruction_sse(cube, m.mean, pca);
    for (int f = 0; f < 200; ++f) {
      EXPECT_LE(best, reconstruction_sse(cube, m.mean, random_frame(rng, cube.bands)) + 1e-10);
    }
    double total = 0.0;
    for (std::size_t p = 0; p < cube.pixels(); ++p)
      for (std::size_t b = 0; b < cube.bands; ++b) total += std::pow(cube.data[b * cube.pixels() + p] - m.mean[b], 2);
    if (total > 0.0) {
      EXPECT_NEAR(m.variance_retained, 1.0 - best / total, 1e-9);
    }
  }
}

TEST(Pca, ProjectionIgnoresBandOffsets) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> level(-64, 64), offset(-50, 50);
  for (int trial = 0; trial < 10; ++trial) {
    io::HyperCube cube(6, 4, 5);
    for (float& v : cube.data) v = static_cast<float>(level(rng)) / 32.0f;
    io::HyperCube shifted = cube;
    for (std::size_t b = 0; b < cube.bands; ++b) {
      const float c = static_cast<float>(offset(rng));
      for (std::size_t p = 0; p < cube.pixels(); ++p) shifted.data[b * cube.pixels() + p] += c;
    }
    const Tensor a = fusion::project_hyper3(cube, fusion::fit_pca(cube));
    const Tensor b = fusion::project_hyper3(shifted, fusion::fit_pca(shifted));
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Pca, MeanSpectrumScoresZero) {
  io::HyperCube cube(4, 2, 2);
  const float values[] = {0.25f, 1.0f, -0.5f, 0.75f, 2.0f, 0.5f, 0.0f, 1.5f,
                          -1.0f, 0.25f, 0.5f, 0.75f, 1.0f, 1.25f, 0.5f, 0.0f};
  std::copy(std::begin(values), std::end(values), cube.data.begin());
  const fusion::PcaModel m = fusion::fit_pca(cube);
  io::HyperCube mean_cube(4, 3, 3);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t p = 0; p < 9; ++p) mean_cube.data[b * 9 + p] = static_cast<float>(m.mean[b]);
  const Tensor scores = fusion::pca_scores(mean_cube, m);
  for (double v : scores.data()) EXPECT_EQ(v, 0.0);
}

TEST(Pca, InvalidCubesAreRejected) {
  EXPECT_THROW(fusion::fit_pca(io::HyperCube(2, 4, 4, 1.0f)), fusionsort::ConfigError);
  EXPECT_THROW(fusion::fit_pca(io::HyperCube(3, 1, 1, 1.0f)), fusionsort::ShapeError);
  io::HyperCube bad(3, 2, 2, 1.0f);
  bad.data[5] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(fusion::fit_pca(bad), fusionsort::Error);
  const fusion::PcaModel m = fusion::fit_pca(checker_cube());
  EXPECT_THROW(fusion::project_hyper3(io::HyperCube(4, 2, 2, 1.0f), m), fusionsort::ShapeError);
}

TEST(Fuse, SameResolutionKeepsBothStreamsExactly) {
  std::mt19937_64 rng(6);
  const Tensor rgb = testutil::random_tensor(rng, {1, 3, 4, 6}, 0.0, 1.0);
  const Tensor h3 = testutil::random_tensor(rng, {1, 3, 4, 6}, 0.0, 1.0);
  const Tensor fused = fusion::fuse(rgb, h3);
  ASSERT_EQ(fused.shape(), (Shape{1, 6, 4, 6}));
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 6; ++x) {
        EXPECT_EQ(fused.at(0, c, y, x), rgb.at(0, c, y, x));
        EXPECT_EQ(fused.at(0, c + 3, y, x), h3.at(0, c, y, x));
      }
    }
  }
}

TEST(Fuse, ConstantHyperChannelsStayConstant) {
  const Tensor fused = fusion::fuse(Tensor({1, 3, 7, 5}, 0.2), Tensor({1, 3, 2, 3}, 0.6));
  for (std::size_t c = 3; c < 6; ++c)
    for (std::size_t y = 0; y < 7; ++y)
      for (std::size_t x = 0; x < 5; ++x) EXPECT_NEAR(fused.at(0, c, y, x), 0.6, 1e-15);
}

TEST(Fuse, UpsampledRampFollowsHalfPixelPattern) {
  Tensor h3({1, 3, 2, 2}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    h3.at(0, c, 0, 1) = 1.0;
    h3.at(0, c, 1, 1) = 1.0;
  }
  const Tensor fused = fusion::fuse(Tensor({1, 3, 4, 4}, 0.0), h3);
  const double expected[4] = {0.0, 0.25, 0.75, 1.0};
  for (std::size_t c = 3; c < 6; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) EXPECT_DOUBLE_EQ(fused.at(0, c, y, x), expected[x]);
}

TEST(Fuse, ChannelCountMismatchIsRejected) {
  EXPECT_THROW(fusion::fuse(Tensor({1, 3, 2, 2}), Tensor({1, 4, 2, 2})), fusionsort::ShapeError);
}

}  // namespace
