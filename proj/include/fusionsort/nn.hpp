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
#include <cstdint>
#include <random>
#include <string>

#include "fusionsort/ops.hpp"
#include "fusionsort/tape.hpp"

// Parameterized layers built on the primitive ops. Layers hold non-owning
// pointers into a ParameterStore.
namespace fusionsort::nn {

/// Seeded source of initial weights: normal(0, sigma).
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed, double sigma = 0.02) : rng_(seed), sigma_(sigma) {}

  Tensor normal(Shape shape);
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  double sigma_;
};

struct Conv2d {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  ops::Conv2dOptions options;

  static Conv2d create(ParameterStore& store, Initializer& init, const std::string& name,
                       std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                       ops::Conv2dOptions options = {}, bool with_bias = true);

  Var operator()(Tape& tape, Var x) const;
  std::size_t out_channels() const { return weight->value.dim(0); }
};

struct BatchNorm2d {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;
  ops::BatchNormOptions options;

  static BatchNorm2d create(ParameterStore& store, const std::string& name, std::size_t channels);

  Var operator()(Tape& tape, Var x, ops::NormMode mode) const;
};

struct LayerNorm {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  double eps = 1e-5;

  static LayerNorm create(ParameterStore& store, const std::string& name, std::size_t dim);

  Var operator()(Tape& tape, Var x) const;
};

struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear create(ParameterStore& store, Initializer& init, const std::string& name,
                       std::size_t in_features, std::size_t out_features, bool with_bias);

  Var operator()(Tape& tape, Var x) const;
};

}  // namespace fusionsort::nn
