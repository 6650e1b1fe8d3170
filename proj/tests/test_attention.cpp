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

#include <cmath>
#include <numeric>
#include <random>

#include "fusionsort/attention.hpp"
#include "fusionsort/errors.hpp"
#include "fusionsort/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = fusionsort;
namespace att = fusionsort::attention;
namespace ops = fusionsort::ops;
using fs::ParameterStore;
using fs::Shape;
using fs::Tape;
using fs::Tensor;
using fs::Var;

namespace {

void randomize(ParameterStore& store, std::mt19937_64& rng, double lo, double hi) {
  for (fs::Parameter* p : store.trainable()) p->value = testutil::random_tensor(rng, p->value.shape(), lo, hi);
  for (fs::Parameter* p : store.all()) {
    if (p->trainable) continue;
    const bool var = p->name.ends_with("running_var");
    p->value = testutil::random_tensor(rng, p->value.shape(), var ? 0.5 : -0.5, var ? 1.5 : 0.5);
  }
}

std::vector<double> values(const ParameterStore& store, const std::string& name) {
  return testutil::to_vec(store.at(name).value);
}

Tensor run_coord(const att::CoordAttention& block, const Tensor& x) {
  Tape t;
  return block(t, t.constant(x), ops::NormMode::kEval).value();
}

Tensor run_mamba(const att::MambaBlock& block, const Tensor& x) {
  Tape t;
  return block(t, t.constant(x)).value();
}

Tensor run_cab(const att::ComprehensiveAttention& block, const Tensor& x) {
  Tape t;
  return block(t, t.constant(x), ops::NormMode::kEval).value();
}

TEST(CoordAttention, MatchesScalarPipeline) {
  std::mt19937_64 rng(1);
  for (std::size_t reduction : {1u, 2u}) {
    ParameterStore store;
    fs::nn::Initializer init(5);
    const auto block = att::CoordAttention::create(store, init, "ca", 2, reduction);
    randomize(store, rng, -1.5, 1.5);
    const Tensor x = testutil::random_tensor(rng, {1, 2, 2, 2});

    oracle::CoordParams p;
    p.channels = 2;
    p.mid = 2 / reduction;
    p.shared_w = values(store, "ca.shared.weight");
    p.shared_b = values(store, "ca.shared.bias");
    p.norm = {values(store, "ca.norm.weight"), values(store, "ca.norm.bias"), values(store, "ca.norm.running_mean"),
              values(store, "ca.norm.running_var"), 1e-5};
    p.x_w = values(store, "ca.conv_x.weight");
    p.x_b = values(store, "ca.conv_x.bias");
    p.y_w = values(store, "ca.conv_y.weight");
    p.y_b = values(store, "ca.conv_y.bias");
    const auto expected = oracle::coord_attention(testutil::to_vec(x), 2, 2, p);
    const Tensor out = run_coord(block, x);
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-13) << i;
  }
}

TEST(CoordAttention, MatchesScalarPipelineOnRectangularMaps) {
  std::mt19937_64 rng(2);
  ParameterStore store;
  fs::nn::Initializer init(6);
  const auto block = att::CoordAttention::create(store, init, "ca", 8, 4);
  randomize(store, rng, -1.0, 1.0);
  const Tensor x = testutil::random_tensor(rng, {1, 8, 3, 5});
  oracle::CoordParams p;
  p.channels = 8;
  p.mid = 2;
  p.shared_w = values(store, "ca.shared.weight");
  p.shared_b = values(store, "ca.shared.bias");
  p.norm = {values(store, "ca.norm.weight"), values(store, "ca.norm.bias"), values(store, "ca.norm.running_mean"),
            values(store, "ca.norm.running_var"), 1e-5};
  p.x_w = values(store, "ca.conv_x.weight");
  p.x_b = values(store, "ca.conv_x.bias");
  p.y_w = values(store, "ca.conv_y.weight");
  p.y_b = values(store, "ca.conv_y.bias");
  const auto expected = oracle::coord_attention(testutil::to_vec(x), 3, 5, p);
  const Tensor out = run_coord(block, x);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-13);
}

TEST(CoordAttention, ZeroParametersQuarterTheInput) {
  std::mt19937_64 rng(3);
  ParameterStore store;
  fs::nn::Initializer init(7);
  const auto block = att::CoordAttention::create(store, init, "ca", 4, 2);
  for (const char* name : {"ca.shared.weight", "ca.shared.bias", "ca.conv_x.weight", "ca.conv_x.bias",
                           "ca.conv_y.weight", "ca.conv_y.bias"}) {
    store.at(name).value.fill(0.0);
  }
  const Tensor x = testutil::random_tensor(rng, {2, 4, 3, 3});
  const Tensor out = run_coord(block, x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(out[i], x[i] / 4.0);
}

TEST(CoordAttention, NeverAmplifiesAnyElement) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore store;
    fs::nn::Initializer init(trial);
    const auto block = att::CoordAttention::create(store, init, "ca", 4, 4);
    randomize(store, rng, -3.0, 3.0);
    const Tensor x = testutil::random_tensor(rng, {1, 4, 4, 3}, -5.0, 5.0);
    const Tensor out = run_coord(block, x);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      EXPECT_LE(std::abs(out[i]), std::abs(x[i]));
      if (x[i] != 0.0) EXPECT_GT(std::abs(out[i]), 0.0);
    }
  }
}

TEST(CoordAttention, ReductionMustDivideChannels) {
  ParameterStore store;
  fs::nn::Initializer init(1);
  EXPECT_THROW(att::CoordAttention::create(store, init, "ca", 6, 4), fs::ConfigError);
  EXPECT_THROW(att::CoordAttention::create(store, init, "cb", 6, 0), fs::ConfigError);
}

TEST(SsmScan, ScalarRecurrence) {
  att::SsmSequence s;
  s.u = Tensor({2, 1}, std::vector<double>{1.0, 2.0});
  s.delta = Tensor({2, 1}, 1.0);
  s.a = Tensor({1, 1}, std::log(0.5));
  s.b = Tensor({2, 1}, 1.0);
  s.c = Tensor({2, 1}, 1.0);
  s.d_skip = Tensor({1}, 0.0);
  const Tensor y = att::ssm_scan(s);
  EXPECT_NEAR(y[0], 1.0, 1e-15);
  EXPECT_NEAR(y[1], 2.5, 1e-15);
}

TEST(SsmScan, VanishingStateIsMemoryless) {
  std::mt19937_64 rng(5);
  const std::size_t len = 6, d = 3, n = 4;
  att::SsmSequence s;
  s.u = testutil::random_tensor(rng, {len, d});
  s.delta = testutil::random_tensor(rng, {len, d}, 0.1, 1.0);
  s.a = Tensor({d, n}, -1e6);
  s.b = testutil::random_tensor(rng, {len, n});
  s.c = testutil::random_tensor(rng, {len, n});
  s.d_skip = Tensor({d}, 0.0);
  const Tensor y = att::ssm_scan(s);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t ch = 0; ch < d; ++ch) {
      double expect = 0.0;
      for (std::size_t k = 0; k < n; ++k) expect += s.c[t * n + k] * s.delta[t * d + ch] * s.b[t * n + k] * s.u[t * d + ch];
      EXPECT_NEAR(y[t * d + ch], expect, 1e-14);
    }
  }
}

TEST(SsmScan, MatchesUnrolledSumOnRandomInstances) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> len_d(1, 16), small(1, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = len_d(rng), d = small(rng), n = small(rng);
    att::SsmSequence s;
    s.u = testutil::random_tensor(rng, {len, d});
    s.delta = testutil::random_tensor(rng, {len, d}, 0.01, 2.0);
    s.a = testutil::random_tensor(rng, {d, n}, -3.0, -0.01);
    s.b = testutil::random_tensor(rng, {len, n});
    s.c = testutil::random_tensor(rng, {len, n});
    s.d_skip = testutil::random_tensor(rng, {d});
    const Tensor y = att::ssm_scan(s);
    const auto ref = oracle::unrolled_scan(testutil::to_vec(s.u), testutil::to_vec(s.delta), testutil::to_vec(s.a),
                                           testutil::to_vec(s.b), testutil::to_vec(s.c), testutil::to_vec(s.d_skip),
                                           len, d, n);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(y[i] - ref[i]));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(SsmScan, BatchedFormMatchesPerSequenceScan) {
  std::mt19937_64 rng(7);
  const std::size_t batch = 3, len = 5, d = 2, n = 3;
  const Tensor u = testutil::random_tensor(rng, {batch, len, d});
  const Tensor delta = testutil::random_tensor(rng, {batch, len, d}, 0.1, 1.0);
  const Tensor a = testutil::random_tensor(rng, {d, n}, -2.0, -0.1);
  const Tensor b = testutil::random_tensor(rng, {batch, len, n});
  const Tensor c = testutil::random_tensor(rng, {batch, len, n});
  const Tensor skip = testutil::random_tensor(rng, {d});
  Tape t;
  const Tensor y = att::ssm_scan(t.constant(u), t.constant(delta), t.constant(a), t.constant(b), t.constant(c),
                                 t.constant(skip))
                       .value();
  for (std::size_t i = 0; i < batch; ++i) {
    auto part = [&](const Tensor& src, std::size_t width) {
      const auto begin = src.data().begin() + static_cast<std::ptrdiff_t>(i * len * width);
      return Tensor({len, width}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(len * width)));
    };
    const Tensor yi = att::ssm_scan({part(u, d), part(delta, d), a, part(b, n), part(c, n), skip});
    for (std::size_t k = 0; k < len * d; ++k) EXPECT_EQ(y[i * len * d + k], yi[k]);
  }
}

TEST(SsmScan, NonPositiveStepIsRejected) {
  att::SsmSequence s{Tensor({2, 1}, 1.0), Tensor({2, 1}, 1.0), Tensor({1, 1}, -1.0),
                     Tensor({2, 1}, 1.0), Tensor({2, 1}, 1.0), Tensor({1}, 0.0)};
  s.delta[1] = 0.0;
  EXPECT_THROW(att::ssm_scan(s), fs::NumericalError);
  s.delta[1] = -0.5;
  EXPECT_THROW(att::ssm_scan(s), fs::NumericalError);
}

TEST(SsmScan, DiscretizedDecayLiesInOpenUnitInterval) {
  std::mt19937_64 rng(8);
  ParameterStore store;
  fs::nn::Initializer init(8);
  const auto block = att::MambaBlock::create(store, init, "m", 4, 8, 4, 3);
  const Tensor& a_log = store.at("m.a_log").value;
  for (double delta : {1e-3, 0.5, 3.0}) {
    for (double v : a_log.data()) {
      const double decay = std::exp(delta * -std::exp(v));
      EXPECT_GT(decay, 0.0);
      EXPECT_LT(decay, 1.0);
    }
  }
  (void)block;
}

oracle::MambaParams mamba_params(const ParameterStore& store, std::size_t c, std::size_t inner, std::size_t state,
                                 std::size_t width) {
  oracle::MambaParams p;
  p.channels = c;
  p.inner = inner;
  p.state = state;
  p.width = width;
  p.ln_gamma = values(store, "m.norm.weight");
  p.ln_beta = values(store, "m.norm.bias");
  p.in_w = values(store, "m.in_proj.weight");
  p.conv_w = values(store, "m.conv.weight");
  p.conv_b = values(store, "m.conv.bias");
  p.delta_w = values(store, "m.delta_proj.weight");
  p.delta_b = values(store, "m.delta_proj.bias");
  p.b_w = values(store, "m.b_proj.weight");
  p.c_w = values(store, "m.c_proj.weight");
  p.a_log = values(store, "m.a_log");
  p.d_skip = values(store, "m.d_skip");
  p.out_w = values(store, "m.out_proj.weight");
  return p;
}

TEST(MambaBlock, MatchesScalarReimplementation) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    ParameterStore store;
    fs::nn::Initializer init(trial);
    const auto block = att::MambaBlock::create(store, init, "m", 2, 4, 3, 3);
    randomize(store, rng, -1.0, 1.0);
    const Tensor x = testutil::random_tensor(rng, {1, 2, 2, 2});
    const auto expected = oracle::mamba_block(testutil::to_vec(x), 2, 2, mamba_params(store, 2, 4, 3, 3));
    const Tensor out = run_mamba(block, x);
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-12) << "trial " << trial;
  }
}

TEST(MambaBlock, MatchesScalarReimplementationOnLongerSequences) {
  std::mt19937_64 rng(10);
  ParameterStore store;
  fs::nn::Initializer init(10);
  const auto block = att::MambaBlock::create(store, init, "m", 3, 6, 4, 4);
  randomize(store, rng, -0.8, 0.8);
  const Tensor x = testutil::random_tensor(rng, {1, 3, 3, 4});
  const auto expected = oracle::mamba_block(testutil::to_vec(x), 3, 4, mamba_params(store, 3, 6, 4, 4));
  const Tensor out = run_mamba(block, x);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);
}

TEST(MambaBlock, ZeroProjectionsLeaveOnlyTheResidual) {
  std::mt19937_64 rng(11);
  ParameterStore store;
  fs::nn::Initializer init(11);
  const auto block = att::MambaBlock::create(store, init, "m", 4, 8, 4, 3);
  randomize(store, rng, -1.0, 1.0);
  for (const char* name : {"m.in_proj.weight", "m.delta_proj.weight", "m.b_proj.weight", "m.c_proj.weight",
                           "m.out_proj.weight"}) {
    store.at(name).value.fill(0.0);
  }
  const Tensor x = testutil::random_tensor(rng, {2, 4, 2, 3});
  EXPECT_EQ(run_mamba(block, x), x);
}

TEST(MambaBlock, IsCausalInRowMajorScanOrder) {
  std::mt19937_64 rng(12);
  ParameterStore store;
  fs::nn::Initializer init(12);
  const auto block = att::MambaBlock::create(store, init, "m", 4, 8, 4, 3);
  randomize(store, rng, -1.0, 1.0);
  const std::size_t h = 3, w = 4;
  for (std::size_t pos = 0; pos < h * w; ++pos) {
    Tensor x = testutil::random_tensor(rng, {1, 4, h, w});
    const Tensor before = run_mamba(block, x);
    for (std::size_t c = 0; c < 4; ++c) x.at(0, c, pos / w, pos % w) += 0.5 * static_cast<double>(c) - 0.6;
    const Tensor after = run_mamba(block, x);
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t q = 0; q < pos; ++q) EXPECT_EQ(before.at(0, c, q / w, q % w), after.at(0, c, q / w, q % w));
      if (pos + 1 < h * w) {
        bool later_changed = false;
        for (std::size_t q = pos + 1; q < h * w; ++q)
          later_changed |= before.at(0, c, q / w, q % w) != after.at(0, c, q / w, q % w);
        EXPECT_TRUE(later_changed);
      }
    }
  }
}

TEST(MambaBlock, RejectsDegenerateSizes) {
  ParameterStore store;
  fs::nn::Initializer init(1);
  EXPECT_THROW(att::MambaBlock::create(store, init, "a", 4, 0, 4, 3), fs::ConfigError);
  EXPECT_THROW(att::MambaBlock::create(store, init, "b", 4, 8, 0, 3), fs::ConfigError);
  EXPECT_THROW(att::MambaBlock::create(store, init, "c", 4, 8, 4, 0), fs::ConfigError);
}

att::ComprehensiveAttention make_cab(ParameterStore& store, att::AttentionFlags flags, std::uint64_t seed = 3) {
  fs::nn::Initializer init(seed);
  return att::ComprehensiveAttention::create(store, init, "cab", 8, flags, {});
}

void copy_shared(ParameterStore& from, ParameterStore& to) {
  for (fs::Parameter* p : to.all()) {
    if (from.contains(p->name)) p->value = from.at(p->name).value;
  }
}

TEST(Fusion, EffectiveWeightsAreAConvexCombination) {
  std::mt19937_64 rng(13);
  ParameterStore store;
  const auto cab = make_cab(store, {true, true, true});
  for (int trial = 0; trial < 100; ++trial) {
    store.at("cab.fusion_logits").value = testutil::random_tensor(rng, {2}, -50.0, 50.0);
    const auto w = cab.effective_weights();
    ASSERT_EQ(w.size(), 2u);
    EXPECT_GT(w[0], 0.0);
    EXPECT_GT(w[1], 0.0);
    EXPECT_NEAR(w[0] + w[1], 1.0, 1e-15);
  }
  store.at("cab.fusion_logits").value.fill(0.3);
  EXPECT_EQ(cab.effective_weights(), (std::vector<double>{0.5, 0.5}));
}

TEST(Fusion, SinglePathGetsUnitWeight) {
  for (att::AttentionFlags flags : {att::AttentionFlags{true, false, true}, att::AttentionFlags{false, true, true},
                                    att::AttentionFlags{false, false, true}}) {
    ParameterStore store;
    const auto cab = make_cab(store, flags);
    store.at("cab.fusion_logits").value = Tensor({2}, std::vector<double>{-3.0, 7.0});
    EXPECT_EQ(cab.effective_weights(), std::vector<double>{1.0});
  }
}

TEST(Fusion, EqualLogitsMatchThePlainAverage) {
  std::mt19937_64 rng(14);
  ParameterStore weighted_store, plain_store;
  const auto weighted = make_cab(weighted_store, {true, true, true});
  const auto plain = make_cab(plain_store, {true, true, false});
  randomize(weighted_store, rng, -1.0, 1.0);
  weighted_store.at("cab.fusion_logits").value.fill(-0.4);
  copy_shared(weighted_store, plain_store);
  const Tensor x = testutil::random_tensor(rng, {1, 8, 4, 4});
  const Tensor a = run_cab(weighted, x), b = run_cab(plain, x);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(Fusion, ShiftingBothLogitsLeavesOutputUnchanged) {
  std::mt19937_64 rng(15);
  ParameterStore store;
  const auto cab = make_cab(store, {true, true, true});
  randomize(store, rng, -1.0, 1.0);
  const Tensor x = testutil::random_tensor(rng, {1, 8, 4, 4});
  const Tensor before = run_cab(cab, x);
  for (double& v : store.at("cab.fusion_logits").value.data()) v += 12.5;
  const Tensor after = run_cab(cab, x);
  for (std::size_t i = 0; i < before.numel(); ++i) EXPECT_NEAR(before[i], after[i], 1e-13);
}

TEST(Fusion, WithoutMambaOnlyTheCoordinatePathMatters) {
  std::mt19937_64 rng(16);
  ParameterStore store;
  const auto cab = make_cab(store, {true, false, true});
  randomize(store, rng, -1.0, 1.0);
  const Tensor x = testutil::random_tensor(rng, {1, 8, 4, 4});
  Tape t;
  const Var xv = t.constant(x);
  const Var path = (*cab.reduce_coord)(t, cab.coord.value()(t, xv, ops::NormMode::kEval));
  const Tensor expected = ops::silu(cab.out_norm(t, path, ops::NormMode::kEval)).value();
  EXPECT_EQ(run_cab(cab, x), expected);
  EXPECT_FALSE(cab.mamba.has_value());
}

TEST(Fusion, DisabledPathsRecordNoOps) {
  struct Row {
    att::AttentionFlags flags;
    bool coord, mamba, fusion, merge;
  };
  for (const Row r : {Row{{false, false, false}, false, false, false, false},
                      Row{{false, true, false}, false, true, false, false},
                      Row{{true, false, false}, true, false, false, false},
                      Row{{false, false, true}, false, false, true, false},
                      Row{{true, true, false}, true, true, false, true},
                      Row{{true, true, true}, true, true, true, false}}) {
    ParameterStore store;
    const auto cab = make_cab(store, r.flags);
    std::mt19937_64 rng(17);
    Tape t;
    cab(t, t.constant(testutil::random_tensor(rng, {1, 8, 4, 4})), ops::NormMode::kEval);
    EXPECT_EQ(t.count_ops_in_scope("coord") > 0, r.coord);
    EXPECT_EQ(t.count_ops_in_scope("mamba") > 0, r.mamba);
    EXPECT_EQ(t.count_ops_in_scope("fusion") > 0, r.fusion);
    EXPECT_EQ(t.count_ops_in_scope("merge") > 0, r.merge);
    EXPECT_GT(t.count_ops_in_scope("out"), 0u);
    EXPECT_EQ(t.count_ops_named("ssm_scan") > 0, r.mamba);
    EXPECT_EQ(t.count_ops_named("avg_pool_x") > 0, r.coord);
  }
}

TEST(Fusion, NothingEnabledIsNormAndActivationOnly) {
  std::mt19937_64 rng(18);
  ParameterStore store;
  const auto cab = make_cab(store, {false, false, false});
  randomize(store, rng, -1.0, 1.0);
  const Tensor x = testutil::random_tensor(rng, {1, 8, 2, 2});
  Tape t;
  const Tensor expected = ops::silu(cab.out_norm(t, t.constant(x), ops::NormMode::kEval)).value();
  EXPECT_EQ(run_cab(cab, x), expected);
  EXPECT_TRUE(cab.effective_weights().empty());
}

}  // namespace
