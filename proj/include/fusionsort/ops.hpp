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

#include <cstddef>
#include <optional>

#include "fusionsort/tape.hpp"
#include "fusionsort/tensor.hpp"

// Differentiable primitives. Each function computes its output eagerly and
// records a backward rule on the tape that owns its inputs.
namespace fusionsort::ops {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Cross-correlation with zero padding. input [N,Ci,H,W], weight
/// [Co,Ci/groups,kh,kw], bias [Co]. Output extents use floor division:
/// H' = (H + 2*padding - kh) / stride + 1.
Var conv2d(Var input, Var weight, std::optional<Var> bias, Conv2dOptions opt = {});

/// Mean over the width axis: [N,C,H,W] -> [N,C,H,1].
Var avg_pool_x(Var input);
/// Mean over the height axis: [N,C,H,W] -> [N,C,1,W].
Var avg_pool_y(Var input);

enum class Activation { kRelu, kSigmoid, kSilu };

Var activation(Var input, Activation kind);
Var relu(Var input);
Var sigmoid(Var input);
Var silu(Var input);
Var softplus(Var input);
/// Elementwise -exp(x).
Var neg_exp(Var input);

enum class NormMode { kTrain, kEval };

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-channel normalization of [N,C,H,W]. Train mode normalizes with the
/// batch statistics (biased variance) and folds them into the running
/// statistics (unbiased variance); eval mode uses the running statistics.
Var batch_norm(Var input, Var gamma, Var beta, Tensor& running_mean,
               Tensor& running_var, NormMode mode, BatchNormOptions opt = {});

/// Normalization over the last axis (extent >= 2).
Var layer_norm(Var input, Var gamma, Var beta, double eps = 1e-5);

/// Bilinear resampling of [N,C,H,W] with half-pixel centers and edge
/// clamping.
Var bilinear_resize(Var input, std::size_t out_h, std::size_t out_w);

/// Concatenation along `axis`; all other extents must match.
Var concat(Var a, Var b, std::size_t axis);
Var concat_channels(Var a, Var b);
Var slice(Var input, std::size_t axis, std::size_t begin, std::size_t count);
Var slice_channels(Var input, std::size_t begin, std::size_t count);

/// [N,C,H,W] -> [N,C,W,H].
Var swap_hw(Var input);

/// Elementwise ops over equal-rank operands; an extent of 1 broadcasts.
Var add(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var input, double factor);
/// input * s[index], with gradients flowing into both.
Var scale_by_element(Var input, Var s, std::size_t index);

/// Softmax of a rank-1 tensor.
Var softmax(Var input);
/// Sum of all elements, shape [1].
Var sum(Var input);

/// Affine map over the last axis: [..., Din] x [Dout, Din] -> [..., Dout].
Var linear(Var input, Var weight, std::optional<Var> bias);

/// [N,C,H,W] -> [N,H*W,C], row-major scan order.
Var to_sequence(Var input);
/// [N,L,C] -> [N,C,h,w] with L == h*w.
Var from_sequence(Var input, std::size_t h, std::size_t w);

/// Depthwise causal convolution over a [N,L,D] sequence with weight [D,k]
/// and bias [D]; the sequence is left-padded with k-1 zeros.
Var causal_depthwise_conv1d(Var input, Var weight, Var bias);

}  // namespace fusionsort::ops
