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

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "fusionsort/errors.hpp"
#include "fusionsort/network.hpp"

namespace fusionsort::net {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0) || !(weight_decay >= 0.0)) throw ConfigError("AdamW eps > 0 and weight decay >= 0 required");
  if (iterations == 0) throw ConfigError("iterations must be >= 1");
  if (!(poly_power >= 0.0)) throw ConfigError("polynomial decay power must be >= 0");
}

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::step(std::span<Parameter* const> params, double learning_rate) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.shape(), 0.0);
      v_.emplace_back(p->value.shape(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ConfigError("AdamW: parameter set changed between steps");
  ++t_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t j = 0; j < params.size(); ++j) {
    Parameter& p = *params[j];
    Tensor& m = m_[j];
    Tensor& v = v_[j];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double update = (m[i] / bias1) / (std::sqrt(v[i] / bias2) + eps_);
      p.value[i] -= learning_rate * (update + weight_decay_ * p.value[i]);
    }
  }
}

double poly_learning_rate(double base, std::size_t t, std::size_t total, double power) {
  const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(total);
  return base * std::pow(std::max(frac, 0.0), power);
}

metrics::ConfusionMatrix confusion_over(const Network& network, std::span<const TrainingExample> data) {
  metrics::ConfusionMatrix cm(network.config().num_classes);
  for (const TrainingExample& ex : data) {
    const Tensor logits = network.predict_logits(ex.input);
    cm.add(metrics::argmax_labels(logits), ex.mask);
  }
  return cm;
}

TrainResult train_toy(Network& network, std::span<const TrainingExample> data, const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw ConfigError("train_toy: dataset is empty");

  ParameterStore& store = network.parameters();
  const std::vector<Parameter*> params = store.trainable();
  AdamW optimizer(config.beta1, config.beta2, config.adam_eps, config.weight_decay);

  TrainResult result;
  result.loss_history.reserve(config.iterations);
  for (std::size_t step = 0; step < config.iterations; ++step) {
    const TrainingExample& ex = data[step % data.size()];
    store.zero_grad();
    Tape tape;
    try {
      const Var logits = network.forward(tape, tape.constant(ex.input), ops::NormMode::kTrain);
      const Var loss = metrics::combined_loss(logits, std::span(&ex.mask, 1), config.loss);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericalError("train_toy: non-finite loss at step " + std::to_string(step));
      }
      result.loss_history.push_back(value);
      tape.backward(loss);
    } catch (const NumericalError& e) {
      if (std::string_view(e.what()).starts_with("train_toy:")) throw;
      throw NumericalError("train_toy: numerical failure at step " + std::to_string(step) + ": " + e.what());
    }
    optimizer.step(params, poly_learning_rate(config.learning_rate, step, config.iterations, config.poly_power));
  }
  result.train_report = metrics::summarize(confusion_over(network, data));
  return result;
}

}  // namespace fusionsort::net
