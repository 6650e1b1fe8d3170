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

#include "fusionsort/suite.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "fusionsort/attention.hpp"
#include "fusionsort/errors.hpp"
#include "fusionsort/gradcheck.hpp"
#include "fusionsort/loss.hpp"
#include "fusionsort/nn.hpp"
#include "fusionsort/ops.hpp"

namespace fusionsort::net {
namespace {

Tensor uniform(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

io::LabelMask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t k) {
  std::uniform_int_distribution<int> dist(0, static_cast<int>(k) - 1);
  io::LabelMask mask(h, w);
  for (auto& v : mask.labels) v = static_cast<std::uint8_t>(dist(rng));
  return mask;
}

void redraw(ParameterStore& store, std::mt19937_64& rng, double lo, double hi) {
  for (Parameter* p : store.trainable()) p->value = uniform(rng, p->value.shape(), lo, hi);
}

/// Weights get unit-gain fan-in scaling so activations stay O(1) through
/// deep paths. Norm scales come from [0.5, 1.5], other vectors from
/// [-0.5, 0.5], and a_log from [-1.4, -0.5] so the state decays slowly enough
/// for every step to matter.
void redraw_scaled(ParameterStore& store, std::mt19937_64& rng) {
  for (Parameter* p : store.trainable()) {
    const Tensor& v = p->value;
    if (p->name.ends_with("a_log")) {
      p->value = uniform(rng, v.shape(), -1.4, -0.5);
    } else if (v.rank() >= 2) {
      const double bound = std::sqrt(3.0 * static_cast<double>(v.dim(0)) / static_cast<double>(v.numel()));
      p->value = uniform(rng, v.shape(), -bound, bound);
    } else if (p->name.ends_with("norm.weight")) {
      p->value = uniform(rng, v.shape(), 0.5, 1.5);
    } else {
      p->value = uniform(rng, v.shape(), -0.5, 0.5);
    }
  }
}

void redraw_running_stats(ParameterStore& store, std::mt19937_64& rng) {
  for (Parameter* p : store.all()) {
    if (p->trainable) continue;
    const bool is_var = p->name.ends_with("running_var");
    p->value = is_var ? uniform(rng, p->value.shape(), 0.5, 1.5) : uniform(rng, p->value.shape(), -0.5, 0.5);
  }
}

/// Projects an output onto fixed random weights so every coordinate matters.
Var probe(Tape& tape, Var out, const Tensor& weights) { return ops::sum(ops::mul(out, tape.constant(weights))); }

class Suite {
 public:
  Suite(double eps, std::uint64_t seed) : eps_(eps), rng_(seed) {}

  void check(const std::string& block, ParameterStore& store, const LossBuilder& loss, double tolerance) {
    const std::vector<Parameter*> params = store.trainable();
    const GradCheckResult r = grad_check(loss, params, eps_);
    results_.push_back({block, r.max_rel_error, tolerance, r.coordinates, r.worst_parameter});
  }

  std::mt19937_64& rng() { return rng_; }
  std::vector<BlockCheck> take() { return std::move(results_); }

 private:
  double eps_;
  std::mt19937_64 rng_;
  std::vector<BlockCheck> results_;
};

void conv_block(Suite& s) {
  ParameterStore store;
  nn::Initializer init(s.rng()());
  Parameter& x = store.add("input", Tensor({1, 3, 5, 6}, 0.0));
  const nn::Conv2d dense = nn::Conv2d::create(store, init, "dense", 3, 4, 3, {1, 1, 1});
  const nn::Conv2d depthwise = nn::Conv2d::create(store, init, "depthwise", 4, 4, 3, {2, 1, 4});
  redraw(store, s.rng(), -1.0, 1.0);
  const Tensor w = uniform(s.rng(), {1, 4, 3, 3}, -1.0, 1.0);
  s.check("conv2d", store, [&](Tape& t) { return probe(t, depthwise(t, dense(t, t.parameter(x))), w); },
          kBlockTolerance);
}

void batch_norm_block(Suite& s) {
  ParameterStore store;
  Parameter& x = store.add("input", Tensor({2, 3, 3, 3}, 0.0));
  const nn::BatchNorm2d norm = nn::BatchNorm2d::create(store, "norm", 3);
  redraw(store, s.rng(), -2.0, 2.0);
  redraw_running_stats(store, s.rng());
  const Tensor w = uniform(s.rng(), {2, 3, 3, 3}, -1.0, 1.0);
  s.check("batch_norm", store,
          [&](Tape& t) { return probe(t, norm(t, t.parameter(x), ops::NormMode::kEval), w); }, kBlockTolerance);
}

void layer_norm_block(Suite& s) {
  ParameterStore store;
  Parameter& x = store.add("input", Tensor({2, 5, 6}, 0.0));
  const nn::LayerNorm norm = nn::LayerNorm::create(store, "norm", 6);
  redraw(store, s.rng(), -2.0, 2.0);
  const Tensor w = uniform(s.rng(), {2, 5, 6}, -1.0, 1.0);
  s.check("layer_norm", store, [&](Tape& t) { return probe(t, norm(t, t.parameter(x)), w); }, kBlockTolerance);
}

void coord_block(Suite& s) {
  ParameterStore store;
  nn::Initializer init(s.rng()());
  Parameter& x = store.add("input", Tensor({1, 8, 4, 5}, 0.0));
  const auto block = attention::CoordAttention::create(store, init, "coord", 8, 4);
  redraw(store, s.rng(), -1.0, 1.0);
  redraw_running_stats(store, s.rng());
  const Tensor w = uniform(s.rng(), {1, 8, 4, 5}, -1.0, 1.0);
  s.check("coord_attention", store,
          [&](Tape& t) { return probe(t, block(t, t.parameter(x), ops::NormMode::kEval), w); }, kBlockTolerance);
}

void mamba_block(Suite& s) {
  ParameterStore store;
  nn::Initializer init(s.rng()());
  Parameter& x = store.add("input", Tensor({1, 4, 3, 4}, 0.0));
  const auto block = attention::MambaBlock::create(store, init, "mamba", 4, 8, 4, 3);
  redraw_scaled(store, s.rng());
  x.value = uniform(s.rng(), x.value.shape(), -2.0, 2.0);
  const Tensor w = uniform(s.rng(), {1, 4, 3, 4}, -1.0, 1.0);
  s.check("mamba", store, [&](Tape& t) { return probe(t, block(t, t.parameter(x)), w); }, kBlockTolerance);
}

void ssm_block(Suite& s) {
  ParameterStore store;
  const std::size_t batch = 2, len = 6, d = 3, n = 4;
  Parameter& u = store.add("u", uniform(s.rng(), {batch, len, d}, -2.0, 2.0));
  Parameter& delta = store.add("delta", uniform(s.rng(), {batch, len, d}, 0.1, 1.0));
  Parameter& a = store.add("a", uniform(s.rng(), {d, n}, -2.0, -0.1));
  Parameter& b = store.add("b", uniform(s.rng(), {batch, len, n}, -1.0, 1.0));
  Parameter& c = store.add("c", uniform(s.rng(), {batch, len, n}, -1.0, 1.0));
  Parameter& skip = store.add("d_skip", uniform(s.rng(), {d}, -1.0, 1.0));
  const Tensor w = uniform(s.rng(), {batch, len, d}, -1.0, 1.0);
  s.check(
      "ssm_scan", store,
      [&](Tape& t) {
        return probe(t,
                     attention::ssm_scan(t.parameter(u), t.parameter(delta), t.parameter(a), t.parameter(b),
                                         t.parameter(c), t.parameter(skip)),
                     w);
      },
      kBlockTolerance);
}

void fusion_block(Suite& s, const NetworkConfig& config) {
  ParameterStore store;
  nn::Initializer init(s.rng()());
  Parameter& x = store.add("input", Tensor({1, 8, 4, 4}, 0.0));
  const attention::AttentionFlags flags{config.use_comprehensive_attention, config.use_mamba,
                                        config.use_weighted_fusion};
  attention::AttentionSizes sizes;
  sizes.reduction = 4;
  sizes.state = config.state;
  sizes.conv_width = config.conv_width;
  const auto block = attention::ComprehensiveAttention::create(store, init, "cab", 8, flags, sizes);
  redraw_scaled(store, s.rng());
  x.value = uniform(s.rng(), x.value.shape(), -2.0, 2.0);
  redraw_running_stats(store, s.rng());
  const Tensor w = uniform(s.rng(), {1, 8, 4, 4}, -1.0, 1.0);
  s.check("weighted_fusion", store,
          [&](Tape& t) { return probe(t, block(t, t.parameter(x), ops::NormMode::kEval), w); }, kBlockTolerance);
}

void loss_blocks(Suite& s) {
  const std::size_t k = 3;
  std::vector<io::LabelMask> masks{random_mask(s.rng(), 4, 4, k), random_mask(s.rng(), 4, 4, k)};
  const Tensor logits = uniform(s.rng(), {2, k, 4, 4}, -2.0, 2.0);
  const std::span<const io::LabelMask> targets(masks);
  const metrics::LossWeights weights(1.0, 1.0);
  const std::vector<std::pair<std::string, std::function<Var(Var)>>> losses{
      {"dice", [&](Var z) { return metrics::dice_loss(z, targets); }},
      {"cross_entropy", [&](Var z) { return metrics::cross_entropy_loss(z, targets); }},
      {"combined", [&](Var z) { return metrics::combined_loss(z, targets, weights); }},
  };
  for (const auto& [name, fn] : losses) {
    ParameterStore store;
    Parameter& z = store.add("logits", logits);
    s.check(name, store, [&](Tape& t) { return fn(t.parameter(z)); }, kLossTolerance);
  }
}

void network_block(Suite& s, NetworkConfig config) {
  config.modality = Modality::kFused;
  config.in_channels = 6;
  config.seed = s.rng()();
  Network network(config);
  ParameterStore& store = network.parameters();
  redraw_scaled(store, s.rng());
  redraw_running_stats(store, s.rng());
  Parameter& x = store.add("input", uniform(s.rng(), {1, 6, 8, 8}, -2.0, 2.0));
  const io::LabelMask mask = random_mask(s.rng(), 8, 8, config.num_classes);
  const metrics::LossWeights weights(1.0, 1.0);
  s.check(
      "network", store,
      [&](Tape& t) {
        const Var logits = network.forward(t, t.parameter(x), ops::NormMode::kEval);
        return metrics::combined_loss(logits, std::span(&mask, 1), weights);
      },
      kBlockTolerance);
}

}  // namespace

std::vector<BlockCheck> run_gradcheck_suite(const NetworkConfig& config, double eps, std::uint64_t seed) {
  if (!(eps > 0.0)) throw ConfigError("gradcheck eps must be positive");
  Suite s(eps, seed);
  conv_block(s);
  batch_norm_block(s);
  layer_norm_block(s);
  coord_block(s);
  mamba_block(s);
  ssm_block(s);
  fusion_block(s, config);
  loss_blocks(s);
  network_block(s, config);
  return s.take();
}

}  // namespace fusionsort::net
