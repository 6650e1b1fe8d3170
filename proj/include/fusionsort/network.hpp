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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fusionsort/attention.hpp"
#include "fusionsort/data_io.hpp"
#include "fusionsort/loss.hpp"
#include "fusionsort/metrics.hpp"
#include "fusionsort/nn.hpp"

namespace fusionsort::net {

/// Which raster(s) feed the network.
enum class Modality { kRgb, kHyper3, kFused, kSpectral };

std::string modality_name(Modality m);
Modality parse_modality(const std::string& name);

/// Rows of the ablation table.
enum class Ablation { kBaseline, kMamba, kComprehensiveAttention, kWeightedFusion, kAll };

std::string ablation_name(Ablation a);
/// Accepts baseline | mamba | ca | wf | all.
Ablation parse_ablation(const std::string& name);

struct NetworkConfig {
  Modality modality = Modality::kFused;
  std::size_t in_channels = 6;
  std::size_t num_classes = 7;
  std::vector<std::size_t> widths{16, 32};
  bool use_comprehensive_attention = true;
  bool use_mamba = true;
  bool use_weighted_fusion = true;
  std::size_t reduction = 4;
  std::size_t state = 4;
  std::size_t conv_width = 3;
  std::uint64_t seed = 0;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  /// Single-line "key=value ..." form stored in checkpoints.
  std::string serialize() const;
  static NetworkConfig parse(const std::string& text);

  NetworkConfig with_ablation(Ablation a) const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Two-stage convolutional encoder, upsampling decoder with the
/// comprehensive attention block, and a 1x1 classifier head.
///
///   stage1: 3x3 conv stride 2 -> BN -> ReLU             (1/2 resolution)
///   stage2: 3x3 conv stride 2 -> BN -> ReLU             (1/4 resolution)
///   up:     bilinear x2 -> 3x3 conv -> BN -> ReLU        (1/2 resolution)
///   merge:  concat with stage1, 1x1 conv to widths[0]
///   cab:    comprehensive attention per the flags
///   head:   bilinear x2 -> 1x1 conv to K logits
class Network {
 public:
  explicit Network(NetworkConfig config);

  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  /// input [N,in_channels,H,W] with H, W divisible by 4.
  Var forward(Tape& tape, Var input, ops::NormMode mode) const;

  /// Eval-mode logits on a scratch tape.
  Tensor predict_logits(const Tensor& input) const;

  const NetworkConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  std::size_t parameter_count() const { return store_.trainable_count(); }
  const attention::ComprehensiveAttention& attention_block() const { return cab_; }

 private:
  NetworkConfig config_;
  ParameterStore store_;
  nn::Conv2d enc1_conv_, enc2_conv_, up_conv_, merge_conv_, head_;
  nn::BatchNorm2d enc1_norm_, enc2_norm_, up_norm_;
  attention::ComprehensiveAttention cab_;
};

/// Builds the network input for one image in the configured modality.
/// `rgb` is [1,3,H,W]; Hyper3 is fitted on `cube` alone.
Tensor make_input(Modality modality, const io::HyperCube& cube, const Tensor& rgb);
std::size_t modality_channels(Modality modality, std::size_t bands);

void save_checkpoint(const Network& network, const std::filesystem::path& path);
/// Rebuilds the network recorded in a checkpoint.
Network load_network(const std::filesystem::path& path);
/// Loads into an existing network; throws ConfigError before touching any
/// parameter when the recorded config differs.
void load_checkpoint(Network& network, const std::filesystem::path& path);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t iterations = 300;
  double poly_power = 0.9;
  metrics::LossWeights loss{1.0, 1.0};

  void validate() const;
};

struct TrainingExample {
  Tensor input;
  io::LabelMask mask;
};

struct TrainResult {
  std::vector<double> loss_history;
  /// Eval-mode metrics over the training set after the last step.
  metrics::SegmentationReport train_report;
};

/// AdamW with decoupled weight decay.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps, double weight_decay);

  void step(std::span<Parameter* const> params, double learning_rate);

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Learning rate at step t of T under polynomial decay.
double poly_learning_rate(double base, std::size_t t, std::size_t total, double power);

/// One example per step in fixed order; lr follows the polynomial schedule.
/// Throws NumericalError naming the step if the loss becomes non-finite.
TrainResult train_toy(Network& network, std::span<const TrainingExample> data, const TrainConfig& config);

/// Pooled eval-mode confusion matrix over `data`.
metrics::ConfusionMatrix confusion_over(const Network& network, std::span<const TrainingExample> data);

}  // namespace fusionsort::net
