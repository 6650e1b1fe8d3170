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
#include <vector>

#include "fusionsort/data_io.hpp"
#include "fusionsort/tensor.hpp"

namespace fusionsort::fusion {

/// Eigendecomposition of a symmetric matrix.
struct SymmetricEigen {
  std::size_t n = 0;
  /// Descending.
  std::vector<double> values;
  /// Row-major n x n; column j is the unit eigenvector for values[j].
  std::vector<double> vectors;
  int sweeps = 0;

  double vector(std::size_t row, std::size_t col) const { return vectors[row * n + col]; }
};

struct JacobiOptions {
  /// Stop once every off-diagonal magnitude is <= tolerance * trace.
  double relative_tolerance = 1e-12;
  int max_sweeps = 100;
};

/// Cyclic Jacobi rotations on a symmetric row-major n x n matrix.
SymmetricEigen jacobi_eigen(std::vector<double> matrix, std::size_t n, JacobiOptions options = {});

inline constexpr std::size_t kHyperComponents = 3;

/// Per-pixel spectral PCA of one hyperspectral cube.
///
/// Components are orthonormal, ordered by descending eigenvalue, and signed
/// so that each one's largest-magnitude coordinate is positive.
struct PcaModel {
  std::vector<double> mean;
  std::array<std::vector<double>, kHyperComponents> components;
  /// All band eigenvalues, descending and non-negative.
  std::vector<double> eigenvalues;
  /// Top-3 eigenvalue mass over total; 1.0 for a zero-variance cube.
  double variance_retained = 1.0;
  int sweeps = 0;

  std::size_t bands() const { return mean.size(); }
};

/// Band-mean vector and population covariance (divisor n) of the pixel
/// spectra. Covariance is row-major bands x bands.
void spectral_statistics(const io::HyperCube& cube, std::vector<double>& mean,
                         std::vector<double>& covariance);

PcaModel fit_pca(const io::HyperCube& cube);

/// Raw component scores [1,3,H,W]: component_k . (spectrum - mean).
Tensor pca_scores(const io::HyperCube& cube, const PcaModel& model);

/// Scores with each channel min-max normalized to [0,1] over the image; a
/// constant channel becomes 0.5 everywhere.
Tensor project_hyper3(const io::HyperCube& cube, const PcaModel& model);

/// Resizes `hyper3` to the RGB raster and appends it after the RGB
/// channels: [N,3,Hr,Wr] + [N,3,Hh,Wh] -> [N,6,Hr,Wr].
Tensor fuse(const Tensor& rgb, const Tensor& hyper3);

}  // namespace fusionsort::fusion
