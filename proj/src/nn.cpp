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

#include "fusionsort/nn.hpp"

namespace fusionsort::nn {

Tensor Initializer::normal(Shape shape) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, sigma_);
  for (double& v : t.data()) v = dist(rng_);
  return t;
}

Conv2d Conv2d::create(ParameterStore& store, Initializer& init, const std::string& name,
                      std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                      ops::Conv2dOptions options, bool with_bias) {
  Conv2d c;
  c.options = options;
  c.weight = &store.add(name + ".weight",
                        init.normal({out_channels, in_channels / options.groups, kernel, kernel}));
  if (with_bias) c.bias = &store.add(name + ".bias", Tensor(Shape{out_channels}, 0.0));
  return c;
}

Var Conv2d::operator()(Tape& tape, Var x) const {
  std::optional<Var> b;
  if (bias) b = tape.parameter(*bias);
  return ops::conv2d(x, tape.parameter(*weight), b, options);
}

BatchNorm2d BatchNorm2d::create(ParameterStore& store, const std::string& name, std::size_t channels) {
  BatchNorm2d bn;
  bn.weight = &store.add(name + ".weight", Tensor(Shape{channels}, 1.0));
  bn.bias = &store.add(name + ".bias", Tensor(Shape{channels}, 0.0));
  bn.running_mean = &store.add(name + ".running_mean", Tensor(Shape{channels}, 0.0), false);
  bn.running_var = &store.add(name + ".running_var", Tensor(Shape{channels}, 1.0), false);
  return bn;
}

Var BatchNorm2d::operator()(Tape& tape, Var x, ops::NormMode mode) const {
  return ops::batch_norm(x, tape.parameter(*weight), tape.parameter(*bias), running_mean->value,
                         running_var->value, mode, options);
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, std::size_t dim) {
  LayerNorm ln;
  ln.weight = &store.add(name + ".weight", Tensor(Shape{dim}, 1.0));
  ln.bias = &store.add(name + ".bias", Tensor(Shape{dim}, 0.0));
  return ln;
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return ops::layer_norm(x, tape.parameter(*weight), tape.parameter(*bias), eps);
}

Linear Linear::create(ParameterStore& store, Initializer& init, const std::string& name,
                      std::size_t in_features, std::size_t out_features, bool with_bias) {
  Linear l;
  l.weight = &store.add(name + ".weight", init.normal({out_features, in_features}));
  if (with_bias) l.bias = &store.add(name + ".bias", Tensor(Shape{out_features}, 0.0));
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  std::optional<Var> b;
  if (bias) b = tape.parameter(*bias);
  return ops::linear(x, tape.parameter(*weight), b);
}

}  // namespace fusionsort::nn
