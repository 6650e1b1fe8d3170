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
#include <string>
#include <vector>

#include "fusionsort/nn.hpp"
#include "fusionsort/ops.hpp"
#include "fusionsort/tape.hpp"

namespace fusionsort::attention {

/// One sequence for the selective state-space scan.
struct SsmSequence {
  Tensor u;       // [L, D] inputs
  Tensor delta;   // [L, D] step sizes, all > 0
  Tensor a;       // [D, N] continuous-time state matrix (diagonal per channel)
  Tensor b;       // [L, N] input-dependent input projection
  Tensor c;       // [L, N] input-dependent output projection
  Tensor d_skip;  // [D]
};

/// Sequential zero-order-hold scan:
///   h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * u_t,  h_0 = 0
///   y_t = C_t . h_t + D_skip * u_t
/// Returns y as [L, D]. Throws NumericalError for any delta <= 0.
Tensor ssm_scan(const SsmSequence& seq);

/// Batched differentiable form: u, delta [B,L,D]; a [D,N]; b, c [B,L,N];
/// d_skip [D]. Output [B,L,D].
Var ssm_scan(Var u, Var delta, Var a, Var b, Var c, Var d_skip);

/// Directional-pooling attention: row and column means share a 1x1
/// bottleneck (conv, batch norm, SiLU), then separate 1x1 convs and sigmoids
/// give gates a_x [N,C,H,1] and a_y [N,C,1,W]; output is x * a_x * a_y.
struct CoordAttention {
  nn::Conv2d shared;
  nn::BatchNorm2d norm;
  nn::Conv2d conv_x;
  nn::Conv2d conv_y;
  std::size_t reduction = 4;

  static CoordAttention create(ParameterStore& store, nn::Initializer& init, const std::string& name,
                               std::size_t channels, std::size_t reduction);

  Var operator()(Tape& tape, Var x, ops::NormMode mode) const;
};

/// Mamba-style block over the row-major pixel sequence with a residual
/// connection.
struct MambaBlock {
  nn::LayerNorm norm;
  nn::Linear in_proj;   // C -> 2 * inner, no bias
  Parameter* conv_weight = nullptr;  // [inner, conv_width]
  Parameter* conv_bias = nullptr;    // [inner]
  nn::Linear delta_proj;  // inner -> inner, softplus applied
  nn::Linear b_proj;      // inner -> state
  nn::Linear c_proj;      // inner -> state
  Parameter* a_log = nullptr;   // [inner, state], A = -exp(a_log)
  Parameter* d_skip = nullptr;  // [inner]
  nn::Linear out_proj;    // inner -> C, no bias
  std::size_t inner = 0;
  std::size_t state = 0;
  std::size_t conv_width = 0;

  static MambaBlock create(ParameterStore& store, nn::Initializer& init, const std::string& name,
                           std::size_t channels, std::size_t inner, std::size_t state,
                           std::size_t conv_width);

  Var operator()(Tape& tape, Var x) const;
};

struct AttentionFlags {
  bool coord = true;
  bool mamba = true;
  bool weighted_fusion = true;
};

struct AttentionSizes {
  std::size_t reduction = 4;
  std::size_t state = 4;
  std::size_t conv_width = 3;
  /// Mamba inner width as a multiple of the channel count.
  std::size_t expand = 2;
};

/// Parallel coordinate-attention and Mamba paths, each followed by a 1x1
/// channel-reduction conv, merged by softmax-weighted fusion, then batch
/// norm and SiLU.
///
/// Without weighted fusion the enabled paths are averaged. With weighted
/// fusion but no attention path, the block input itself is the single fused
/// path. With nothing enabled the block is batch norm and SiLU only.
///
/// Ops are recorded under the tape scopes "coord", "mamba", "fusion",
/// "merge" and "out".
struct ComprehensiveAttention {
  AttentionFlags flags;
  std::optional<CoordAttention> coord;
  std::optional<MambaBlock> mamba;
  std::optional<nn::Conv2d> reduce_coord;
  std::optional<nn::Conv2d> reduce_mamba;
  std::optional<nn::Conv2d> reduce_identity;
  Parameter* fusion_logits = nullptr;  // [2]: (conv path, mamba path)
  nn::BatchNorm2d out_norm;

  static ComprehensiveAttention create(ParameterStore& store, nn::Initializer& init,
                                       const std::string& name, std::size_t channels,
                                       AttentionFlags flags, AttentionSizes sizes);

  Var operator()(Tape& tape, Var x, ops::NormMode mode) const;

  /// Effective fusion weights of the enabled paths, in (conv, mamba) order.
  std::vector<double> effective_weights() const;
};

}  // namespace fusionsort::attention
