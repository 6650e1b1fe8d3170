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

#include "fusionsort/loss.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fusionsort/errors.hpp"
#include "fusionsort/ops.hpp"

namespace fusionsort::metrics {

LossWeights::LossWeights(double alpha, double beta) : alpha_(alpha), beta_(beta) {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (alpha == 0.0 && beta == 0.0) throw ConfigError("loss weights alpha and beta cannot both be zero");
}

namespace {

struct LossDims {
  std::size_t batch, classes, pixels;
};

LossDims check_targets(const Tensor& logits, std::span<const io::LabelMask> targets) {
  require_rank(logits, 4, "loss logits");
  const LossDims d{logits.dim(0), logits.dim(1), logits.dim(2) * logits.dim(3)};
  if (targets.size() != d.batch) {
    throw ShapeError("loss: " + std::to_string(targets.size()) + " masks for a batch of " +
                     std::to_string(d.batch));
  }
  for (const io::LabelMask& m : targets) {
    if (m.height != logits.dim(2) || m.width != logits.dim(3) || m.labels.size() != d.pixels) {
      throw ShapeError("loss: mask " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                       " does not match logits " + shape_to_string(logits.shape()));
    }
    m.check_classes(d.classes);
  }
  return d;
}

// Per-pixel softmax over the class axis, same layout as the logits.
Tensor softmax_classes(const Tensor& logits, const LossDims& d) {
  Tensor p(logits.shape());
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t i = 0; i < d.pixels; ++i) {
      double m = -INFINITY;
      for (std::size_t k = 0; k < d.classes; ++k) m = std::max(m, logits[(n * d.classes + k) * d.pixels + i]);
      double z = 0.0;
      for (std::size_t k = 0; k < d.classes; ++k) {
        const std::size_t at = (n * d.classes + k) * d.pixels + i;
        p[at] = std::exp(logits[at] - m);
        z += p[at];
      }
      for (std::size_t k = 0; k < d.classes; ++k) p[(n * d.classes + k) * d.pixels + i] /= z;
    }
  }
  return p;
}

}  // namespace

Var dice_loss(Var logits, std::span<const io::LabelMask> targets, double eps) {
  const LossDims d = check_targets(logits.value(), targets);
  Tensor p = softmax_classes(logits.value(), d);
  std::vector<std::uint8_t> labels;
  for (const io::LabelMask& m : targets) labels.insert(labels.end(), m.labels.begin(), m.labels.end());

  std::vector<double> inter(d.classes, 0.0), pred_mass(d.classes, 0.0), true_mass(d.classes, 0.0);
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t k = 0; k < d.classes; ++k)
      for (std::size_t i = 0; i < d.pixels; ++i) {
        const double pk = p[(n * d.classes + k) * d.pixels + i];
        const bool hit = labels[n * d.pixels + i] == k;
        pred_mass[k] += pk;
        if (hit) {
          inter[k] += pk;
          true_mass[k] += 1.0;
        }
      }
  double loss = 0.0;
  for (std::size_t k = 0; k < d.classes; ++k) {
    const double denom = pred_mass[k] + true_mass[k] + eps;
    if (!(denom > 0.0)) throw NumericalError("dice_loss: empty class with eps = 0");
    loss += 1.0 - (2.0 * inter[k] + eps) / denom;
  }
  loss /= static_cast<double>(d.classes);

  return logits.tape().record(
      "dice_loss", Tensor::scalar(loss), {logits},
      [d, p = std::move(p), labels = std::move(labels), inter, pred_mass, true_mass, eps](const BackwardContext& ctx) {
        Tensor* gx = ctx.grad(0);
        if (!gx) return;
        const double gout = ctx.out_grad()[0] / static_cast<double>(d.classes);
        std::vector<double> gp(d.classes);
        for (std::size_t n = 0; n < d.batch; ++n)
          for (std::size_t i = 0; i < d.pixels; ++i) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d.classes; ++k) {
              const double s = pred_mass[k] + true_mass[k] + eps;
              const double g = labels[n * d.pixels + i] == k ? 1.0 : 0.0;
              gp[k] = -gout * (2.0 * g * s - (2.0 * inter[k] + eps)) / (s * s);
              dot += gp[k] * p[(n * d.classes + k) * d.pixels + i];
            }
            for (std::size_t k = 0; k < d.classes; ++k) {
              const std::size_t at = (n * d.classes + k) * d.pixels + i;
              (*gx)[at] += p[at] * (gp[k] - dot);
            }
          }
      });
}

Var cross_entropy_loss(Var logits, std::span<const io::LabelMask> targets) {
  const LossDims d = check_targets(logits.value(), targets);
  const Tensor& x = logits.value();
  std::vector<std::uint8_t> labels;
  for (const io::LabelMask& m : targets) labels.insert(labels.end(), m.labels.begin(), m.labels.end());

  const double count = static_cast<double>(d.batch * d.pixels);
  double loss = 0.0;
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t i = 0; i < d.pixels; ++i) {
      double m = -INFINITY;
      for (std::size_t k = 0; k < d.classes; ++k) m = std::max(m, x[(n * d.classes + k) * d.pixels + i]);
      double z = 0.0;
      for (std::size_t k = 0; k < d.classes; ++k) z += std::exp(x[(n * d.classes + k) * d.pixels + i] - m);
      const std::size_t target = labels[n * d.pixels + i];
      loss += m + std::log(z) - x[(n * d.classes + target) * d.pixels + i];
    }
  loss /= count;

  Tensor p = softmax_classes(x, d);
  return logits.tape().record(
      "cross_entropy_loss", Tensor::scalar(loss), {logits},
      [d, count, p = std::move(p), labels = std::move(labels)](const BackwardContext& ctx) {
        Tensor* gx = ctx.grad(0);
        if (!gx) return;
        const double gout = ctx.out_grad()[0] / count;
        for (std::size_t n = 0; n < d.batch; ++n)
          for (std::size_t k = 0; k < d.classes; ++k)
            for (std::size_t i = 0; i < d.pixels; ++i) {
              const std::size_t at = (n * d.classes + k) * d.pixels + i;
              const double onehot = labels[n * d.pixels + i] == k ? 1.0 : 0.0;
              (*gx)[at] += gout * (p[at] - onehot);
            }
      });
}

Var combined_loss(Var logits, std::span<const io::LabelMask> targets, const LossWeights& weights) {
  if (weights.beta() == 0.0) return ops::scale(dice_loss(logits, targets), weights.alpha());
  if (weights.alpha() == 0.0) return ops::scale(cross_entropy_loss(logits, targets), weights.beta());
  return ops::add(ops::scale(dice_loss(logits, targets), weights.alpha()),
                  ops::scale(cross_entropy_loss(logits, targets), weights.beta()));
}

}  // namespace fusionsort::metrics
