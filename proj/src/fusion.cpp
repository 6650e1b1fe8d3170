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

#include "fusionsort/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusionsort/errors.hpp"
#include "fusionsort/ops.hpp"

namespace fusionsort::fusion {

SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, JacobiOptions options) {
  if (n == 0 || a.size() != n * n) throw ShapeError("jacobi_eigen: matrix is not n x n");
  for (double v : a) {
    if (!std::isfinite(v)) throw NumericalError("jacobi_eigen: non-finite matrix entry");
  }

  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += std::abs(a[i * n + i]);
  const double threshold = options.relative_tolerance * trace;

  auto max_off_diagonal = [&]() {
    double m = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) m = std::max(m, std::abs(a[p * n + q]));
    return m;
  };

  int sweeps = 0;
  while (sweeps < options.max_sweeps && max_off_diagonal() > threshold) {
    ++sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        a[p * n + q] = 0.0;
        a[q * n + p] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });

  SymmetricEigen out;
  out.n = n;
  out.sweeps = sweeps;
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a[order[j] * n + order[j]];
    for (std::size_t i = 0; i < n; ++i) out.vectors[i * n + j] = v[i * n + order[j]];
  }
  return out;
}

void spectral_statistics(const io::HyperCube& cube, std::vector<double>& mean,
                         std::vector<double>& covariance) {
  const std::size_t bands = cube.bands, pixels = cube.pixels();
  mean.assign(bands, 0.0);
  for (std::size_t b = 0; b < bands; ++b) {
    double acc = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) acc += cube.data[b * pixels + p];
    mean[b] = acc / static_cast<double>(pixels);
  }
  std::vector<double> centered(bands * pixels);
  for (std::size_t b = 0; b < bands; ++b)
    for (std::size_t p = 0; p < pixels; ++p)
      centered[b * pixels + p] = cube.data[b * pixels + p] - mean[b];

  covariance.assign(bands * bands, 0.0);
  for (std::size_t i = 0; i < bands; ++i) {
    const double* xi = centered.data() + i * pixels;
    for (std::size_t j = i; j < bands; ++j) {
      const double* xj = centered.data() + j * pixels;
      double acc = 0.0;
      for (std::size_t p = 0; p < pixels; ++p) acc += xi[p] * xj[p];
      acc /= static_cast<double>(pixels);
      covariance[i * bands + j] = acc;
      covariance[j * bands + i] = acc;
    }
  }
}

namespace {

// Makes the largest-magnitude coordinate positive. Coordinates within a
// relative 1e-9 of the maximum count as tied; the lowest index wins.
void fix_sign(std::vector<double>& v) {
  double largest = 0.0;
  for (double x : v) largest = std::max(largest, std::abs(x));
  for (double x : v) {
    if (std::abs(x) >= largest * (1.0 - 1e-9)) {
      if (x < 0) {
        for (double& y : v) y = -y;
      }
      return;
    }
  }
}

}  // namespace

PcaModel fit_pca(const io::HyperCube& cube) {
  cube.validate();
  if (cube.bands < kHyperComponents) {
    throw ConfigError("fit_pca: need at least 3 bands, cube has " + std::to_string(cube.bands));
  }
  if (cube.pixels() < 2) throw ShapeError("fit_pca: need at least 2 pixels");

  PcaModel model;
  std::vector<double> cov;
  spectral_statistics(cube, model.mean, cov);
  const std::size_t bands = cube.bands;
  const SymmetricEigen eig = jacobi_eigen(std::move(cov), bands);
  model.sweeps = eig.sweeps;

  model.eigenvalues.resize(bands);
  double total = 0.0;
  for (std::size_t j = 0; j < bands; ++j) {
    model.eigenvalues[j] = std::max(0.0, eig.values[j]);
    total += model.eigenvalues[j];
  }
  for (std::size_t k = 0; k < kHyperComponents; ++k) {
    auto& comp = model.components[k];
    comp.resize(bands);
    for (std::size_t i = 0; i < bands; ++i) comp[i] = eig.vector(i, k);
    fix_sign(comp);
  }
  const double top = model.eigenvalues[0] + model.eigenvalues[1] + model.eigenvalues[2];
  model.variance_retained = total > 0.0 ? std::clamp(top / total, 0.0, 1.0) : 1.0;
  return model;
}

Tensor pca_scores(const io::HyperCube& cube, const PcaModel& model) {
  cube.validate();
  if (model.bands() != cube.bands) {
    throw ShapeError("project_hyper3: model has " + std::to_string(model.bands()) + " bands, cube has " +
                     std::to_string(cube.bands));
  }
  const std::size_t pixels = cube.pixels();
  Tensor scores(Shape{1, kHyperComponents, cube.height, cube.width});
  for (std::size_t k = 0; k < kHyperComponents; ++k) {
    double* out = scores.data().data() + k * pixels;
    for (std::size_t b = 0; b < cube.bands; ++b) {
      const double w = model.components[k][b];
      const double m = model.mean[b];
      const float* plane = cube.data.data() + b * pixels;
      for (std::size_t p = 0; p < pixels; ++p) out[p] += w * (plane[p] - m);
    }
  }
  return scores;
}

Tensor project_hyper3(const io::HyperCube& cube, const PcaModel& model) {
  Tensor scores = pca_scores(cube, model);
  const std::size_t pixels = cube.pixels();
  for (std::size_t k = 0; k < kHyperComponents; ++k) {
    auto plane = scores.data().subspan(k * pixels, pixels);
    const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
    const double min = *lo, max = *hi;
    for (double& v : plane) v = max > min ? (v - min) / (max - min) : 0.5;
  }
  return scores;
}

Tensor fuse(const Tensor& rgb, const Tensor& hyper3) {
  require_rank(rgb, 4, "fuse rgb");
  require_rank(hyper3, 4, "fuse hyper3");
  if (rgb.dim(1) != 3 || hyper3.dim(1) != 3 || rgb.dim(0) != hyper3.dim(0)) {
    throw ShapeError("fuse: expected [N,3,H,W] inputs, got " + shape_to_string(rgb.shape()) + " and " +
                     shape_to_string(hyper3.shape()));
  }
  Tape tape;
  const Var resized = ops::bilinear_resize(tape.constant(hyper3), rgb.dim(2), rgb.dim(3));
  return ops::concat_channels(tape.constant(rgb), resized).value();
}

}  // namespace fusionsort::fusion
