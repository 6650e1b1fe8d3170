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

#include "fusionsort/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fusionsort/errors.hpp"

namespace fusionsort::ops {

namespace {

[[noreturn]] void shape_fail(const std::string& op, const std::string& detail) {
  throw ShapeError(op + ": " + detail);
}

std::string dims(const Tensor& t) { return shape_to_string(t.shape()); }

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Strides for reading `in` at an index of the broadcast output shape.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(in.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[i] = (in[i] == 1 && out[i] != 1) ? 0 : s;
    s *= in[i];
  }
  return strides;
}

Shape broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank()) {
    shape_fail(op, "rank mismatch " + dims(a) + " vs " + dims(b));
  }
  Shape out(a.rank());
  for (std::size_t i = 0; i < a.rank(); ++i) {
    const std::size_t x = a.dim(i), y = b.dim(i);
    if (x != y && x != 1 && y != 1) {
      shape_fail(op, "cannot broadcast " + dims(a) + " with " + dims(b));
    }
    out[i] = std::max(x, y);
  }
  return out;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, Fn&& fn) {
  const auto stride_a = broadcast_strides(sa, out);
  const auto stride_b = broadcast_strides(sb, out);
  const std::size_t rank = out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t total = shape_numel(out);
  for (std::size_t o = 0; o < total; ++o) {
    fn(o, ia, ib);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += stride_a[ax];
      ib += stride_b[ax];
      if (idx[ax] < out[ax]) break;
      ia -= stride_a[ax] * idx[ax];
      ib -= stride_b[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

template <typename F, typename DF>
Var unary(const char* name, Var input, F f, DF df) {
  const Tensor& x = input.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = f(x[i]);
  return input.tape().record(name, std::move(y), {input}, [df](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad(0)) {
      const Tensor& x = ctx.input(0);
      const Tensor& y = ctx.output();
      const Tensor& g = ctx.out_grad();
      for (std::size_t i = 0; i < x.numel(); ++i) (*gx)[i] += g[i] * df(x[i], y[i]);
    }
  });
}

}  // namespace

Var conv2d(Var input, Var weight, std::optional<Var> bias, Conv2dOptions opt) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const std::size_t n_batch = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), cig = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const std::size_t g = opt.groups, s = opt.stride, p = opt.padding;
  if (g == 0 || s == 0) shape_fail("conv2d", "groups and stride must be >= 1");
  if (ci % g != 0 || co % g != 0) {
    shape_fail("conv2d", "channels " + std::to_string(ci) + "->" + std::to_string(co) +
                             " not divisible by groups " + std::to_string(g));
  }
  if (cig != ci / g) {
    shape_fail("conv2d", "weight " + dims(w) + " expects " + std::to_string(cig * g) +
                             " input channels, input is " + dims(x));
  }
  if (h + 2 * p < kh || wd + 2 * p < kw) {
    shape_fail("conv2d", "kernel " + dims(w) + " larger than padded input " + dims(x));
  }
  if (bias) {
    const Tensor& b = bias->value();
    if (b.rank() != 1 || b.dim(0) != co) {
      shape_fail("conv2d", "bias " + dims(b) + " does not match " + std::to_string(co) +
                               " output channels");
    }
  }
  const std::size_t ho = (h + 2 * p - kh) / s + 1;
  const std::size_t wo = (wd + 2 * p - kw) / s + 1;
  const std::size_t co_per_group = co / g;

  // Visits every (input element, weight element, output element) triple that
  // contributes to the cross-correlation.
  auto visit = [=](auto&& fn) {
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t oc = 0; oc < co; ++oc) {
        const std::size_t group = oc / co_per_group;
        for (std::size_t icl = 0; icl < cig; ++icl) {
          const std::size_t ic = group * cig + icl;
          for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
              const std::size_t wi = ((oc * cig + icl) * kh + ki) * kw + kj;
              for (std::size_t oh = 0; oh < ho; ++oh) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + ki) -
                                          static_cast<std::ptrdiff_t>(p);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                const std::size_t in_row = ((n * ci + ic) * h + ih) * wd;
                const std::size_t out_row = ((n * co + oc) * ho + oh) * wo;
                for (std::size_t ow = 0; ow < wo; ++ow) {
                  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kj) -
                                            static_cast<std::ptrdiff_t>(p);
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd)) continue;
                  fn(in_row + iw, wi, out_row + ow);
                }
              }
            }
          }
        }
      }
    }
  };

  Tensor y(Shape{n_batch, co, ho, wo});
  if (bias) {
    const Tensor& b = bias->value();
    for (std::size_t n = 0; n < n_batch; ++n)
      for (std::size_t oc = 0; oc < co; ++oc)
        std::fill_n(y.data().begin() + ((n * co + oc) * ho * wo), ho * wo, b[oc]);
  }
  {
    const double* xd = x.data().data();
    const double* wdp = w.data().data();
    double* yd = y.data().data();
    visit([&](std::size_t xi, std::size_t wi, std::size_t yi) { yd[yi] += wdp[wi] * xd[xi]; });
  }

  std::vector<Var> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return input.tape().record(
      "conv2d", std::move(y), std::move(inputs), [visit, has_bias, n_batch, co, ho, wo](const BackwardContext& ctx) {
        const double* g = ctx.out_grad().data().data();
        const double* xd = ctx.input(0).data().data();
        const double* wdp = ctx.input(1).data().data();
        Tensor* gx = ctx.grad(0);
        Tensor* gw = ctx.grad(1);
        if (gx && gw) {
          double* gxd = gx->data().data();
          double* gwd = gw->data().data();
          visit([&](std::size_t xi, std::size_t wi, std::size_t yi) {
            gxd[xi] += wdp[wi] * g[yi];
            gwd[wi] += xd[xi] * g[yi];
          });
        } else if (gx) {
          double* gxd = gx->data().data();
          visit([&](std::size_t xi, std::size_t wi, std::size_t yi) { gxd[xi] += wdp[wi] * g[yi]; });
        } else if (gw) {
          double* gwd = gw->data().data();
          visit([&](std::size_t xi, std::size_t wi, std::size_t yi) { gwd[wi] += xd[xi] * g[yi]; });
        }
        if (has_bias) {
          if (Tensor* gb = ctx.grad(2)) {
            for (std::size_t n = 0; n < n_batch; ++n)
              for (std::size_t oc = 0; oc < co; ++oc) {
                double acc = 0.0;
                const std::size_t base = (n * co + oc) * ho * wo;
                for (std::size_t i = 0; i < ho * wo; ++i) acc += g[base + i];
                (*gb)[oc] += acc;
              }
          }
        }
      });
}

Var avg_pool_x(Var input) {
  const Tensor& x = input.value();
  require_rank(x, 4, "avg_pool_x");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y(Shape{n, c, h, 1});
  const std::size_t rows = n * c * h;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w; ++j) acc += x[r * w + j];
    y[r] = acc / static_cast<double>(w);
  }
  return input.tape().record("avg_pool_x", std::move(y), {input}, [rows, w](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad(0)) {
      const Tensor& g = ctx.out_grad();
      const double inv = 1.0 / static_cast<double>(w);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) (*gx)[r * w + j] += g[r] * inv;
    }
  });
}

Var avg_pool_y(Var input) {
  const Tensor& x = input.value();
  require_rank(x, 4, "avg_pool_y");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y(Shape{n, c, 1, w});
  const std::size_t planes = n * c;
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < h; ++i) acc += x[(p * h + i) * w + j];
      y[p * w + j] = acc / static_cast<double>(h);
    }
  }
  return input.tape().record("avg_pool_y", std::move(y), {input}, [planes, h, w](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad(0)) {
      const Tensor& g = ctx.out_grad();
      const double inv = 1.0 / static_cast<double>(h);
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) (*gx)[(p * h + i) * w + j] += g[p * w + j] * inv;
    }
  });
}

Var relu(Var input) {
  return unary(
      "relu", input, [](double x) { return x < 0 ? 0.0 : x; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(Var input) {
  return unary("sigmoid", input, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var silu(Var input) {
  return unary(
      "silu", input, [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        const double s = sigmoid_scalar(x);
        return s + x * s * (1.0 - s);
      });
}

Var softplus(Var input) {
  return unary(
      "softplus", input, [](double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); },
      [](double x, double) { return sigmoid_scalar(x); });
}

Var neg_exp(Var input) {
  return unary(
      "neg_exp", input, [](double x) { return -std::exp(x); }, [](double, double y) { return y; });
}

Var activation(Var input, Activation kind) {
  switch (kind) {
    case Activation::kRelu:
      return relu(input);
    case Activation::kSigmoid:
      return sigmoid(input);
    case Activation::kSilu:
      return silu(input);
  }
  throw ConfigError("unknown activation");
}

Var batch_norm(Var input, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
               NormMode mode, BatchNormOptions opt) {
  const Tensor& x = input.value();
  require_rank(x, 4, "batch_norm");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma.value(), &beta.value(), &running_mean, &running_var}) {
    if (t->rank() != 1 || t->dim(0) != c) {
      shape_fail("batch_norm", "per-channel tensor " + dims(*t) + " does not match " + dims(x));
    }
  }
  const std::size_t count = n * hw;
  if (mode == NormMode::kTrain && count < 2) {
    throw NumericalError("batch_norm: train mode needs at least 2 values per channel, got " +
                         std::to_string(count));
  }

  Tensor mean(Shape{c}), inv_std(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double m, v;
    if (mode == NormMode::kTrain) {
      double acc = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) acc += x[(b * c + ch) * hw + i];
      m = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = x[(b * c + ch) * hw + i] - m;
          sq += d * d;
        }
      v = sq / static_cast<double>(count);
      const double unbiased = sq / static_cast<double>(count - 1);
      running_mean[ch] = (1.0 - opt.momentum) * running_mean[ch] + opt.momentum * m;
      running_var[ch] = (1.0 - opt.momentum) * running_var[ch] + opt.momentum * unbiased;
    } else {
      m = running_mean[ch];
      v = running_var[ch];
    }
    const double denom = std::sqrt(v + opt.eps);
    if (denom == 0.0) {
      throw NumericalError("batch_norm: zero variance with eps=0 in channel " + std::to_string(ch));
    }
    mean[ch] = m;
    inv_std[ch] = 1.0 / denom;
  }

  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  Tensor y(x.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t k = (b * c + ch) * hw + i;
        y[k] = gm[ch] * (x[k] - mean[ch]) * inv_std[ch] + bt[ch];
      }

  const bool train = mode == NormMode::kTrain;
  return input.tape().record(
      "batch_norm", std::move(y), {input, gamma, beta},
      [mean, inv_std, train, n, c, hw, count](const BackwardContext& ctx) {
        const Tensor& x = ctx.input(0);
        const Tensor& gm = ctx.input(1);
        const Tensor& g = ctx.out_grad();
        Tensor* gx = ctx.grad(0);
        Tensor* ggamma = ctx.grad(1);
        Tensor* gbeta = ctx.grad(2);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t k = (b * c + ch) * hw + i;
              const double xhat = (x[k] - mean[ch]) * inv_std[ch];
              sum_g += g[k];
              sum_gx += g[k] * xhat;
            }
          if (ggamma) (*ggamma)[ch] += sum_gx;
          if (gbeta) (*gbeta)[ch] += sum_g;
          if (!gx) continue;
          const double scale = gm[ch] * inv_std[ch];
          const double mean_g = sum_g / static_cast<double>(count);
          const double mean_gx = sum_gx / static_cast<double>(count);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t k = (b * c + ch) * hw + i;
              if (train) {
                const double xhat = (x[k] - mean[ch]) * inv_std[ch];
                (*gx)[k] += scale * (g[k] - mean_g - xhat * mean_gx);
              } else {
                (*gx)[k] += scale * g[k];
              }
            }
        }
      });
}

Var layer_norm(Var input, Var gamma, Var beta, double eps) {
  const Tensor& x = input.value();
  const std::size_t d = x.shape().back();
  if (d < 2) shape_fail("layer_norm", "normalized axis needs extent >= 2, got " + dims(x));
  for (const Tensor* t : {&gamma.value(), &beta.value()}) {
    if (t->rank() != 1 || t->dim(0) != d) {
      shape_fail("layer_norm", "affine tensor " + dims(*t) + " does not match " + dims(x));
    }
  }
  const std::size_t rows = x.numel() / d;
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double m = 0.0;
    for (std::size_t j = 0; j < d; ++j) m += x[r * d + j];
    m /= static_cast<double>(d);
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (x[r * d + j] - m) * (x[r * d + j] - m);
    v /= static_cast<double>(d);
    const double denom = std::sqrt(v + eps);
    if (denom == 0.0) throw NumericalError("layer_norm: zero variance with eps=0");
    inv_std[r] = 1.0 / denom;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (x[r * d + j] - m) * inv_std[r];
      y[r * d + j] = gm[j] * xhat[r * d + j] + bt[j];
    }
  }
  return input.tape().record(
      "layer_norm", std::move(y), {input, gamma, beta},
      [xhat = std::move(xhat), inv_std, rows, d](const BackwardContext& ctx) {
        const Tensor& gm = ctx.input(1);
        const Tensor& g = ctx.out_grad();
        Tensor* gx = ctx.grad(0);
        Tensor* ggamma = ctx.grad(1);
        Tensor* gbeta = ctx.grad(2);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dx = 0.0, mean_dx_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = r * d + j;
            if (ggamma) (*ggamma)[j] += g[k] * xhat[k];
            if (gbeta) (*gbeta)[j] += g[k];
            const double dxhat = g[k] * gm[j];
            mean_dx += dxhat;
            mean_dx_xhat += dxhat * xhat[k];
          }
          if (!gx) continue;
          mean_dx /= static_cast<double>(d);
          mean_dx_xhat /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = r * d + j;
            (*gx)[k] += inv_std[r] * (g[k] * gm[j] - mean_dx - xhat[k] * mean_dx_xhat);
          }
        }
      });
}

namespace {

struct ResizeTap {
  std::size_t i0, i1;
  double frac;
};

std::vector<ResizeTap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<ResizeTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[i] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Var bilinear_resize(Var input, std::size_t out_h, std::size_t out_w) {
  const Tensor& x = input.value();
  require_rank(x, 4, "bilinear_resize");
  if (out_h == 0 || out_w == 0) shape_fail("bilinear_resize", "output size must be >= 1");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ty = resize_taps(h, out_h);
  const auto tx = resize_taps(w, out_w);
  Tensor y(Shape{n, c, out_h, out_w});
  const std::size_t planes = n * c;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data().data() + p * h * w;
    double* dst = y.data().data() + p * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const auto& a = ty[i];
      for (std::size_t j = 0; j < out_w; ++j) {
        const auto& b = tx[j];
        const double top = src[a.i0 * w + b.i0] * (1 - b.frac) + src[a.i0 * w + b.i1] * b.frac;
        const double bot = src[a.i1 * w + b.i0] * (1 - b.frac) + src[a.i1 * w + b.i1] * b.frac;
        dst[i * out_w + j] = top * (1 - a.frac) + bot * a.frac;
      }
    }
  }
  return input.tape().record(
      "bilinear_resize", std::move(y), {input},
      [ty, tx, planes, h, w, out_h, out_w](const BackwardContext& ctx) {
        Tensor* gx = ctx.grad(0);
        if (!gx) return;
        const Tensor& g = ctx.out_grad();
        for (std::size_t p = 0; p < planes; ++p) {
          double* dst = gx->data().data() + p * h * w;
          const double* go = g.data().data() + p * out_h * out_w;
          for (std::size_t i = 0; i < out_h; ++i) {
            const auto& a = ty[i];
            for (std::size_t j = 0; j < out_w; ++j) {
              const auto& b = tx[j];
              const double v = go[i * out_w + j];
              dst[a.i0 * w + b.i0] += v * (1 - a.frac) * (1 - b.frac);
              dst[a.i0 * w + b.i1] += v * (1 - a.frac) * b.frac;
              dst[a.i1 * w + b.i0] += v * a.frac * (1 - b.frac);
              dst[a.i1 * w + b.i1] += v * a.frac * b.frac;
            }
          }
        }
      });
}

namespace {

// Splits a shape around `axis` into (outer, extent, inner) block sizes.
struct AxisBlocks {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisBlocks axis_blocks(const Shape& s, std::size_t axis) {
  AxisBlocks b;
  for (std::size_t i = 0; i < axis; ++i) b.outer *= s[i];
  b.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) b.inner *= s[i];
  return b;
}

}  // namespace

Var concat(Var a, Var b, std::size_t axis) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != y.rank() || axis >= x.rank()) {
    shape_fail("concat", "incompatible operands " + dims(x) + " and " + dims(y) + " on axis " +
                             std::to_string(axis));
  }
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i != axis && x.dim(i) != y.dim(i)) {
      shape_fail("concat", "extent mismatch " + dims(x) + " vs " + dims(y) + " on axis " +
                               std::to_string(i));
    }
  }
  Shape out_shape = x.shape();
  out_shape[axis] += y.dim(axis);
  const AxisBlocks ba = axis_blocks(x.shape(), axis);
  const AxisBlocks bb = axis_blocks(y.shape(), axis);
  const std::size_t la = ba.extent * ba.inner, lb = bb.extent * bb.inner;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < ba.outer; ++o) {
    std::copy_n(x.data().begin() + o * la, la, out.data().begin() + o * (la + lb));
    std::copy_n(y.data().begin() + o * lb, lb, out.data().begin() + o * (la + lb) + la);
  }
  return a.tape().record("concat", std::move(out), {a, b}, [ba, la, lb](const BackwardContext& ctx) {
    const Tensor& g = ctx.out_grad();
    Tensor* ga = ctx.grad(0);
    Tensor* gb = ctx.grad(1);
    for (std::size_t o = 0; o < ba.outer; ++o) {
      if (ga)
        for (std::size_t i = 0; i < la; ++i) (*ga)[o * la + i] += g[o * (la + lb) + i];
      if (gb)
        for (std::size_t i = 0; i < lb; ++i) (*gb)[o * lb + i] += g[o * (la + lb) + la + i];
    }
  });
}

Var concat_channels(Var a, Var b) {
  require_rank(a.value(), 4, "concat_channels");
  require_rank(b.value(), 4, "concat_channels");
  return concat(a, b, 1);
}

Var slice(Var input, std::size_t axis, std::size_t begin, std::size_t count) {
  const Tensor& x = input.value();
  if (axis >= x.rank() || count == 0 || begin + count > x.dim(axis)) {
    shape_fail("slice", "range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                            ") invalid on axis " + std::to_string(axis) + " of " + dims(x));
  }
  const AxisBlocks blk = axis_blocks(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = count;
  Tensor out(out_shape);
  const std::size_t in_len = blk.extent * blk.inner, out_len = count * blk.inner;
  for (std::size_t o = 0; o < blk.outer; ++o) {
    std::copy_n(x.data().begin() + o * in_len + begin * blk.inner, out_len,
                out.data().begin() + o * out_len);
  }
  return input.tape().record(
      "slice", std::move(out), {input}, [blk, in_len, out_len, begin](const BackwardContext& ctx) {
        Tensor* gx = ctx.grad(0);
        if (!gx) return;
        const Tensor& g = ctx.out_grad();
        for (std::size_t o = 0; o < blk.outer; ++o)
          for (std::size_t i = 0; i < out_len; ++i)
            (*gx)[o * in_len + begin * blk.inner + i] += g[o * out_len + i];
      });
}

Var slice_channels(Var input, std::size_t begin, std::size_t count) {
  require_rank(input.value(), 4, "slice_channels");
  return slice(input, 1, begin, count);
}

Var swap_hw(Var input) {
  const Tensor& x = input.value();
  require_rank(x, 4, "swap_hw");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y(Shape{x.dim(0), x.dim(1), w, h});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) y[(p * w + j) * h + i] = x[(p * h + i) * w + j];
  return input.tape().record("swap_hw", std::move(y), {input}, [planes, h, w](const BackwardContext& ctx) {
    Tensor* gx = ctx.grad(0);
    if (!gx) return;
    const Tensor& g = ctx.out_grad();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) (*gx)[(p * h + i) * w + j] += g[(p * w + j) * h + i];
  });
}

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const Shape out_shape = broadcast_shape("add", x, y);
  Tensor out(out_shape);
  for_each_broadcast(out_shape, x.shape(), y.shape(),
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = x[ia] + y[ib]; });
  return a.tape().record("add", std::move(out), {a, b}, [out_shape](const BackwardContext& ctx) {
    const Tensor& g = ctx.out_grad();
    Tensor* ga = ctx.grad(0);
    Tensor* gb = ctx.grad(1);
    for_each_broadcast(out_shape, ctx.input(0).shape(), ctx.input(1).shape(),
                       [&](std::size_t o, std::size_t ia, std::size_t ib) {
                         if (ga) (*ga)[ia] += g[o];
                         if (gb) (*gb)[ib] += g[o];
                       });
  });
}

Var mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const Shape out_shape = broadcast_shape("mul", x, y);
  Tensor out(out_shape);
  for_each_broadcast(out_shape, x.shape(), y.shape(),
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = x[ia] * y[ib]; });
  return a.tape().record("mul", std::move(out), {a, b}, [out_shape](const BackwardContext& ctx) {
    const Tensor& g = ctx.out_grad();
    const Tensor& x = ctx.input(0);
    const Tensor& y = ctx.input(1);
    Tensor* ga = ctx.grad(0);
    Tensor* gb = ctx.grad(1);
    for_each_broadcast(out_shape, x.shape(), y.shape(), [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (ga) (*ga)[ia] += g[o] * y[ib];
      if (gb) (*gb)[ib] += g[o] * x[ia];
    });
  });
}

Var scale(Var input, double factor) {
  Tensor y = input.value();
  y *= factor;
  return input.tape().record("scale", std::move(y), {input}, [factor](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad(0)) {
      const Tensor& g = ctx.out_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * factor;
    }
  });
}

Var scale_by_element(Var input, Var s, std::size_t index) {
  if (index >= s.value().numel()) {
    shape_fail("scale_by_element", "index " + std::to_string(index) + " out of range for " +
                                       dims(s.value()));
  }
  Tensor y = input.value();
  y *= s.value()[index];
  return input.tape().record("scale_by_element", std::move(y), {input, s}, [index](const BackwardContext& ctx) {
    const Tensor& g = ctx.out_grad();
    const Tensor& x = ctx.input(0);
    const double k = ctx.input(1)[index];
    if (Tensor* gx = ctx.grad(0))
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * k;
    if (Tensor* gs = ctx.grad(1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * x[i];
      (*gs)[index] += acc;
    }
  });
}

Var softmax(Var input) {
  const Tensor& x = input.value();
  require_rank(x, 1, "softmax");
  const double m = *std::max_element(x.data().begin(), x.data().end());
  Tensor y(x.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  y *= 1.0 / z;
  return input.tape().record("softmax", std::move(y), {input}, [](const BackwardContext& ctx) {
    Tensor* gx = ctx.grad(0);
    if (!gx) return;
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.out_grad();
    double dot = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) dot += g[i] * y[i];
    for (std::size_t i = 0; i < y.numel(); ++i) (*gx)[i] += y[i] * (g[i] - dot);
  });
}

Var sum(Var input) {
  double acc = 0.0;
  for (double v : input.value().data()) acc += v;
  return input.tape().record("sum", Tensor::scalar(acc), {input}, [](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad(0)) {
      const double g = ctx.out_grad()[0];
      for (double& v : gx->data()) v += g;
    }
  });
}

Var linear(Var input, Var weight, std::optional<Var> bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  require_rank(w, 2, "linear weight");
  const std::size_t din = x.shape().back();
  const std::size_t dout = w.dim(0);
  if (w.dim(1) != din) {
    shape_fail("linear", "weight " + dims(w) + " cannot consume input " + dims(x));
  }
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != dout)) {
    shape_fail("linear", "bias " + dims(bias->value()) + " does not match weight " + dims(w));
  }
  const std::size_t rows = x.numel() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor y(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * din;
    for (std::size_t o = 0; o < dout; ++o) {
      const double* wr = w.data().data() + o * din;
      double acc = bias ? bias->value()[o] : 0.0;
      for (std::size_t i = 0; i < din; ++i) acc += wr[i] * xr[i];
      y[r * dout + o] = acc;
    }
  }
  std::vector<Var> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return input.tape().record("linear", std::move(y), std::move(inputs),
                             [rows, din, dout, has_bias](const BackwardContext& ctx) {
                               const Tensor& x = ctx.input(0);
                               const Tensor& w = ctx.input(1);
                               const Tensor& g = ctx.out_grad();
                               Tensor* gx = ctx.grad(0);
                               Tensor* gw = ctx.grad(1);
                               Tensor* gb = has_bias ? ctx.grad(2) : nullptr;
                               for (std::size_t r = 0; r < rows; ++r) {
                                 for (std::size_t o = 0; o < dout; ++o) {
                                   const double go = g[r * dout + o];
                                   if (go == 0.0) continue;
                                   if (gb) (*gb)[o] += go;
                                   for (std::size_t i = 0; i < din; ++i) {
                                     if (gx) (*gx)[r * din + i] += go * w[o * din + i];
                                     if (gw) (*gw)[o * din + i] += go * x[r * din + i];
                                   }
                                 }
                               }
                             });
}

Var to_sequence(Var input) {
  const Tensor& x = input.value();
  require_rank(x, 4, "to_sequence");
  const std::size_t n = x.dim(0), c = x.dim(1), l = x.dim(2) * x.dim(3);
  Tensor y(Shape{n, l, c});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t t = 0; t < l; ++t) y[(b * l + t) * c + ch] = x[(b * c + ch) * l + t];
  return input.tape().record("to_sequence", std::move(y), {input}, [n, c, l](const BackwardContext& ctx) {
    Tensor* gx = ctx.grad(0);
    if (!gx) return;
    const Tensor& g = ctx.out_grad();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t t = 0; t < l; ++t) (*gx)[(b * c + ch) * l + t] += g[(b * l + t) * c + ch];
  });
}

Var from_sequence(Var input, std::size_t h, std::size_t w) {
  const Tensor& x = input.value();
  require_rank(x, 3, "from_sequence");
  const std::size_t n = x.dim(0), l = x.dim(1), c = x.dim(2);
  if (l != h * w) {
    shape_fail("from_sequence", "length " + std::to_string(l) + " != " + std::to_string(h) + "x" +
                                    std::to_string(w));
  }
  Tensor y(Shape{n, c, h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t t = 0; t < l; ++t) y[(b * c + ch) * l + t] = x[(b * l + t) * c + ch];
  return input.tape().record("from_sequence", std::move(y), {input}, [n, c, l](const BackwardContext& ctx) {
    Tensor* gx = ctx.grad(0);
    if (!gx) return;
    const Tensor& g = ctx.out_grad();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t t = 0; t < l; ++t) (*gx)[(b * l + t) * c + ch] += g[(b * c + ch) * l + t];
  });
}

Var causal_depthwise_conv1d(Var input, Var weight, Var bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank(x, 3, "causal_depthwise_conv1d input");
  require_rank(w, 2, "causal_depthwise_conv1d weight");
  const std::size_t n = x.dim(0), l = x.dim(1), d = x.dim(2), k = w.dim(1);
  if (w.dim(0) != d || b.rank() != 1 || b.dim(0) != d) {
    shape_fail("causal_depthwise_conv1d", "weight " + dims(w) + " / bias " + dims(b) +
                                              " do not match input " + dims(x));
  }
  Tensor y(x.shape());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < l; ++t)
      for (std::size_t ch = 0; ch < d; ++ch) {
        double acc = b[ch];
        for (std::size_t j = 0; j < k; ++j) {
          // tap j reads position t - (k - 1) + j
          if (t + j + 1 < k) continue;
          acc += w[ch * k + j] * x[(s * l + t + j + 1 - k) * d + ch];
        }
        y[(s * l + t) * d + ch] = acc;
      }
  return input.tape().record(
      "causal_depthwise_conv1d", std::move(y), {input, weight, bias}, [n, l, d, k](const BackwardContext& ctx) {
        const Tensor& x = ctx.input(0);
        const Tensor& w = ctx.input(1);
        const Tensor& g = ctx.out_grad();
        Tensor* gx = ctx.grad(0);
        Tensor* gw = ctx.grad(1);
        Tensor* gb = ctx.grad(2);
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t t = 0; t < l; ++t)
            for (std::size_t ch = 0; ch < d; ++ch) {
              const double go = g[(s * l + t) * d + ch];
              if (gb) (*gb)[ch] += go;
              for (std::size_t j = 0; j < k; ++j) {
                if (t + j + 1 < k) continue;
                const std::size_t src = (s * l + t + j + 1 - k) * d + ch;
                if (gx) (*gx)[src] += go * w[ch * k + j];
                if (gw) (*gw)[ch * k + j] += go * x[src];
              }
            }
      });
}

}  // namespace fusionsort::ops
