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

#include <span>

#include "fusionsort/data_io.hpp"
#include "fusionsort/tape.hpp"

namespace fusionsort::metrics {

/// Weights of the combined objective alpha * dice + beta * cross-entropy.
class LossWeights {
 public:
  /// Throws ConfigError for negative weights or alpha == beta == 0.
  LossWeights(double alpha = 1.0, double beta = 1.0);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

 private:
  double alpha_;
  double beta_;
};

inline constexpr double kDiceSmoothing = 1e-5;

/// Soft Dice loss over softmax(logits) against one-hot targets, averaged
/// over all K classes (absent ones included). Sums pool every pixel of the
/// batch. logits [N,K,H,W]; targets.size() == N.
Var dice_loss(Var logits, std::span<const io::LabelMask> targets, double eps = kDiceSmoothing);

/// Mean negative log-likelihood of the target class, log-sum-exp stabilized.
Var cross_entropy_loss(Var logits, std::span<const io::LabelMask> targets);

Var combined_loss(Var logits, std::span<const io::LabelMask> targets, const LossWeights& weights);

}  // namespace fusionsort::metrics
