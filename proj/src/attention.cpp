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

#include "fusionsort/attention.hpp"

#include <algorithm>
#include <cmath>

#include "fusionsort/errors.hpp"

namespace fusionsort::attention {

namespace {

struct ScanDims {
  std::size_t batch, length, inner, state;
};

ScanDims check_scan_shapes(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b,
                           const Tensor& c, const Tensor& d_skip) {
  require_rank(u, 3, "ssm_scan u");
  require_rank(a, 2, "ssm_scan A");
  const ScanDims d{u.dim(0), u.dim(1), u.dim(2), a.dim(1)};
  const Shape seq_state{d.batch, d.length, d.state};
  if (delta.shape() != u.shape() || a.dim(0) != d.inner || b.shape() != seq_state ||
      c.shape() != seq_state || d_skip.shape() != Shape{d.inner}) {
    throw ShapeError("ssm_scan: inconsistent shapes u " + shape_to_string(u.shape()) + ", delta " +
                     shape_to_string(delta.shape()) + ", A " + shape_to_string(a.shape()) + ", B " +
                     shape_to_string(b.shape()) + ", C " + shape_to_string(c.shape()) + ", D " +
                     shape_to_string(d_skip.shape()));
  }
  for (std::size_t i = 0; i < delta.numel(); ++i) {
    if (!(delta[i] > 0.0)) {
      throw NumericalError("ssm_scan: discretization needs delta > 0, got " + std::to_string(delta[i]) +
                           " at index " + std::to_string(i));
    }
  }
  return d;
}

// Runs the recurrence; fills y [B,L,D] and the states h [B,L,D,N].
void scan_forward(const ScanDims& d, const Tensor& u, const Tensor& delta, const Tensor& a,
                  const Tensor& b, const Tensor& c, const Tensor& d_skip, Tensor& y,
                  std::vector<double>& states) {
  states.assign(d.batch * d.length * d.inner * d.state, 0.0);
  for (std::size_t s = 0; s < d.batch; ++s) {
    for (std::size_t t = 0; t < d.length; ++t) {
      const std::size_t row = s * d.length + t;
      for (std::size_t ch = 0; ch < d.inner; ++ch) {
        const double ut = u[row * d.inner + ch];
        const double dt = delta[row * d.inner + ch];
        double acc = d_skip[ch] * ut;
        double* h = states.data() + (row * d.inner + ch) * d.state;
        const double* h_prev = t > 0 ? states.data() + ((row - 1) * d.inner + ch) * d.state : nullptr;
        for (std::size_t n = 0; n < d.state; ++n) {
          const double decay = std::exp(dt * a[ch * d.state + n]);
          h[n] = (h_prev ? decay * h_prev[n] : 0.0) + dt * b[row * d.state + n] * ut;
          acc += c[row * d.state + n] * h[n];
        }
        y[row * d.inner + ch] = acc;
      }
    }
  }
}

}  // namespace

Tensor ssm_scan(const SsmSequence& seq) {
  require_rank(seq.u, 2, "ssm_scan u");
  const std::size_t l = seq.u.dim(0), din = seq.u.dim(1);
  const Tensor u = seq.u.reshaped({1, l, din});
  const Tensor delta = seq.delta.reshaped({1, seq.delta.dim(0), seq.delta.numel() / seq.delta.dim(0)});
  const Tensor b = seq.b.reshaped({1, seq.b.dim(0), seq.b.numel() / seq.b.dim(0)});
  const Tensor c = seq.c.reshaped({1, seq.c.dim(0), seq.c.numel() / seq.c.dim(0)});
  const ScanDims d = check_scan_shapes(u, delta, seq.a, b, c, seq.d_skip);
  Tensor y(Shape{1, l, din});
  std::vector<double> states;
  scan_forward(d, u, delta, seq.a, b, c, seq.d_skip, y, states);
  return y.reshaped({l, din});
}

Var ssm_scan(Var u, Var delta, Var a, Var b, Var c, Var d_skip) {
  const ScanDims d = check_scan_shapes(u.value(), delta.value(), a.value(), b.value(), c.value(),
                                       d_skip.value());
  Tensor y(u.shape());
  std::vector<double> states;
  scan_forward(d, u.value(), delta.value(), a.value(), b.value(), c.value(), d_skip.value(), y, states);

  return u.tape().record(
      "ssm_scan", std::move(y), {u, delta, a, b, c, d_skip},
      [d, states = std::move(states)](const BackwardContext& ctx) {
        const Tensor& u = ctx.input(0);
        const Tensor& delta = ctx.input(1);
        const Tensor& a = ctx.input(2);
        const Tensor& b = ctx.input(3);
        const Tensor& c = ctx.input(4);
        const Tensor& d_skip = ctx.input(5);
        const Tensor& g = ctx.out_grad();
        Tensor* gu = ctx.grad(0);
        Tensor* gdelta = ctx.grad(1);
        Tensor* ga = ctx.grad(2);
        Tensor* gb = ctx.grad(3);
        Tensor* gc = ctx.grad(4);
        Tensor* gd = ctx.grad(5);

        // Gradient flowing into h_{t} from step t+1.
        std::vector<double> carry(d.inner * d.state);
        for (std::size_t s = 0; s < d.batch; ++s) {
          std::fill(carry.begin(), carry.end(), 0.0);
          for (std::size_t t = d.length; t-- > 0;) {
            const std::size_t row = s * d.length + t;
            for (std::size_t ch = 0; ch < d.inner; ++ch) {
              const std::size_t k = row * d.inner + ch;
              const double gy = g[k];
              const double ut = u[k];
              const double dt = delta[k];
              if (gd) (*gd)[ch] += gy * ut;
              if (gu) (*gu)[k] += gy * d_skip[ch];
              const double* h = states.data() + k * d.state;
              const double* h_prev = t > 0 ? states.data() + (k - d.inner) * d.state : nullptr;
              for (std::size_t n = 0; n < d.state; ++n) {
                const double a_cn = a[ch * d.state + n];
                const double b_tn = b[row * d.state + n];
                if (gc) (*gc)[row * d.state + n] += gy * h[n];
                const double gh = carry[ch * d.state + n] + gy * c[row * d.state + n];
                const double decay = std::exp(dt * a_cn);
                const double g_decay = h_prev ? gh * h_prev[n] : 0.0;
                if (gdelta) (*gdelta)[k] += g_decay * decay * a_cn + gh * b_tn * ut;
                if (ga) (*ga)[ch * d.state + n] += g_decay * decay * dt;
                if (gb) (*gb)[row * d.state + n] += gh * dt * ut;
                if (gu) (*gu)[k] += gh * dt * b_tn;
                carry[ch * d.state + n] = gh * decay;
              }
            }
          }
        }
      });
}

CoordAttention CoordAttention::create(ParameterStore& store, nn::Initializer& init, const std::string& name,
                                      std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels % reduction != 0) {
    throw ConfigError("coordinate attention: channels " + std::to_string(channels) +
                      " not divisible by reduction " + std::to_string(reduction));
  }
  const std::size_t mid = channels / reduction;
  CoordAttention ca;
  ca.reduction = reduction;
  ca.shared = nn::Conv2d::create(store, init, name + ".shared", channels, mid, 1);
  ca.norm = nn::BatchNorm2d::create(store, name + ".norm", mid);
  ca.conv_x = nn::Conv2d::create(store, init, name + ".conv_x", mid, channels, 1);
  ca.conv_y = nn::Conv2d::create(store, init, name + ".conv_y", mid, channels, 1);
  return ca;
}

Var CoordAttention::operator()(Tape& tape, Var x, ops::NormMode mode) const {
  require_rank(x.value(), 4, "coord_attention");
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  const Var pooled_x = ops::avg_pool_x(x);                 // [N,C,H,1]
  const Var pooled_y = ops::swap_hw(ops::avg_pool_y(x));   // [N,C,W,1]
  Var joint = ops::concat(pooled_x, pooled_y, 2);          // [N,C,H+W,1]
  joint = ops::silu(norm(tape, shared(tape, joint), mode));
  const Var part_x = ops::slice(joint, 2, 0, h);
  const Var part_y = ops::swap_hw(ops::slice(joint, 2, h, w));
  const Var gate_x = ops::sigmoid(conv_x(tape, part_x));  // [N,C,H,1]
  const Var gate_y = ops::sigmoid(conv_y(tape, part_y));  // [N,C,1,W]
  return ops::mul(ops::mul(x, gate_x), gate_y);
}

MambaBlock MambaBlock::create(ParameterStore& store, nn::Initializer& init, const std::string& name,
                              std::size_t channels, std::size_t inner, std::size_t state,
                              std::size_t conv_width) {
  if (channels < 2 || inner == 0 || state == 0 || conv_width == 0) {
    throw ConfigError("mamba block: channels >= 2 and positive inner/state/conv widths required");
  }
  MambaBlock m;
  m.inner = inner;
  m.state = state;
  m.conv_width = conv_width;
  m.norm = nn::LayerNorm::create(store, name + ".norm", channels);
  m.in_proj = nn::Linear::create(store, init, name + ".in_proj", channels, 2 * inner, false);
  m.conv_weight = &store.add(name + ".conv.weight", init.normal({inner, conv_width}));
  m.conv_bias = &store.add(name + ".conv.bias", Tensor(Shape{inner}, 0.0));
  m.delta_proj = nn::Linear::create(store, init, name + ".delta_proj", inner, inner, true);
  m.b_proj = nn::Linear::create(store, init, name + ".b_proj", inner, state, false);
  m.c_proj = nn::Linear::create(store, init, name + ".c_proj", inner, state, false);
  // S4D-real initialisation: A[:, n] = -(n + 1).
  Tensor a_log(Shape{inner, state});
  for (std::size_t ch = 0; ch < inner; ++ch)
    for (std::size_t n = 0; n < state; ++n) a_log[ch * state + n] = std::log(static_cast<double>(n + 1));
  m.a_log = &store.add(name + ".a_log", std::move(a_log));
  m.d_skip = &store.add(name + ".d_skip", Tensor(Shape{inner}, 1.0));
  m.out_proj = nn::Linear::create(store, init, name + ".out_proj", inner, channels, false);
  return m;
}

Var MambaBlock::operator()(Tape& tape, Var x) const {
  require_rank(x.value(), 4, "mamba_block");
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  const Var seq = norm(tape, ops::to_sequence(x));  // [N,L,C]
  const Var proj = in_proj(tape, seq);               // [N,L,2*inner]
  Var branch = ops::slice(proj, 2, 0, inner);
  const Var gate = ops::silu(ops::slice(proj, 2, inner, inner));
  branch = ops::causal_depthwise_conv1d(branch, tape.parameter(*conv_weight), tape.parameter(*conv_bias));
  const Var u = ops::silu(branch);
  const Var delta = ops::softplus(delta_proj(tape, u));
  const Var a = ops::neg_exp(tape.parameter(*a_log));
  const Var y = ssm_scan(u, delta, a, b_proj(tape, u), c_proj(tape, u), tape.parameter(*d_skip));
  const Var out = out_proj(tape, ops::mul(y, gate));
  return ops::add(x, ops::from_sequence(out, h, w));
}

ComprehensiveAttention ComprehensiveAttention::create(ParameterStore& store, nn::Initializer& init,
                                                      const std::string& name, std::size_t channels,
                                                      AttentionFlags flags, AttentionSizes sizes) {
  ComprehensiveAttention cab;
  cab.flags = flags;
  if (flags.coord) {
    cab.coord = CoordAttention::create(store, init, name + ".coord", channels, sizes.reduction);
    cab.reduce_coord = nn::Conv2d::create(store, init, name + ".coord_reduce", channels, channels, 1);
  }
  if (flags.mamba) {
    cab.mamba = MambaBlock::create(store, init, name + ".mamba", channels, sizes.expand * channels,
                                   sizes.state, sizes.conv_width);
    cab.reduce_mamba = nn::Conv2d::create(store, init, name + ".mamba_reduce", channels, channels, 1);
  }
  if (flags.weighted_fusion) {
    if (!flags.coord && !flags.mamba) {
      cab.reduce_identity = nn::Conv2d::create(store, init, name + ".identity_reduce", channels, channels, 1);
    }
    cab.fusion_logits = &store.add(name + ".fusion_logits", Tensor(Shape{2}, 0.0));
  }
  cab.out_norm = nn::BatchNorm2d::create(store, name + ".out_norm", channels);
  return cab;
}

Var ComprehensiveAttention::operator()(Tape& tape, Var x, ops::NormMode mode) const {
  std::vector<Var> paths;
  std::vector<std::size_t> slots;  // index into fusion_logits per path
  if (coord) {
    Tape::Scope scope(tape, "coord");
    paths.push_back((*reduce_coord)(tape, (*coord)(tape, x, mode)));
    slots.push_back(0);
  }
  if (mamba) {
    Tape::Scope scope(tape, "mamba");
    paths.push_back((*reduce_mamba)(tape, (*mamba)(tape, x)));
    slots.push_back(1);
  }

  Var merged = x;
  if (flags.weighted_fusion) {
    Tape::Scope scope(tape, "fusion");
    if (paths.empty()) {
      paths.push_back((*reduce_identity)(tape, x));
      slots.push_back(0);
    }
    Var logits = tape.parameter(*fusion_logits);
    if (paths.size() == 1) logits = ops::slice(logits, 0, slots[0], 1);
    const Var weights = ops::softmax(logits);
    merged = ops::scale_by_element(paths[0], weights, 0);
    for (std::size_t i = 1; i < paths.size(); ++i) {
      merged = ops::add(merged, ops::scale_by_element(paths[i], weights, i));
    }
  } else if (paths.size() == 1) {
    merged = paths[0];
  } else if (paths.size() > 1) {
    Tape::Scope scope(tape, "merge");
    merged = ops::scale(ops::add(paths[0], paths[1]), 0.5);
  }

  Tape::Scope scope(tape, "out");
  return ops::silu(out_norm(tape, merged, mode));
}

std::vector<double> ComprehensiveAttention::effective_weights() const {
  std::vector<double> raw;
  if (flags.weighted_fusion) {
    if (coord) raw.push_back(fusion_logits->value[0]);
    if (mamba) raw.push_back(fusion_logits->value[1]);
    if (raw.empty()) raw.push_back(fusion_logits->value[0]);
  } else {
    const std::size_t n = (coord ? 1 : 0) + (mamba ? 1 : 0);
    return std::vector<double>(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  }
  double m = raw[0];
  for (double v : raw) m = std::max(m, v);
  double z = 0.0;
  for (double& v : raw) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : raw) v /= z;
  return raw;
}

}  // namespace fusionsort::attention
