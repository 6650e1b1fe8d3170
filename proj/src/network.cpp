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

#include "fusionsort/network.hpp"

#include <sstream>

#include "fusionsort/checkpoint.hpp"
#include "fusionsort/errors.hpp"
#include "fusionsort/fusion.hpp"

namespace fusionsort::net {

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::kRgb:
      return "rgb";
    case Modality::kHyper3:
      return "hyper3";
    case Modality::kFused:
      return "fused";
    case Modality::kSpectral:
      return "spectral";
  }
  return "?";
}

Modality parse_modality(const std::string& name) {
  if (name == "rgb") return Modality::kRgb;
  if (name == "hyper3") return Modality::kHyper3;
  if (name == "fused") return Modality::kFused;
  if (name == "spectral") return Modality::kSpectral;
  throw ConfigError("unknown modality '" + name + "' (expected rgb, hyper3, fused or spectral)");
}

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kBaseline:
      return "baseline";
    case Ablation::kMamba:
      return "mamba";
    case Ablation::kComprehensiveAttention:
      return "ca";
    case Ablation::kWeightedFusion:
      return "wf";
    case Ablation::kAll:
      return "all";
  }
  return "?";
}

Ablation parse_ablation(const std::string& name) {
  if (name == "baseline") return Ablation::kBaseline;
  if (name == "mamba") return Ablation::kMamba;
  if (name == "ca") return Ablation::kComprehensiveAttention;
  if (name == "wf") return Ablation::kWeightedFusion;
  if (name == "all") return Ablation::kAll;
  throw ConfigError("unknown ablation '" + name + "' (expected baseline, mamba, ca, wf or all)");
}

void NetworkConfig::validate() const {
  if (in_channels == 0) throw ConfigError("in_channels must be >= 1");
  if (num_classes < 2 || num_classes > 256) throw ConfigError("num_classes must be in [2, 256]");
  if (widths.size() != 2) throw ConfigError("the encoder has exactly two stage widths");
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("stage widths must be positive");
  }
  if (widths[0] < 2) throw ConfigError("widths[0] must be >= 2 for layer norm in the attention block");
  if (use_comprehensive_attention && (reduction == 0 || widths[0] % reduction != 0)) {
    throw ConfigError("widths[0] = " + std::to_string(widths[0]) + " is not divisible by reduction " +
                      std::to_string(reduction));
  }
  if (use_mamba && (state == 0 || conv_width == 0)) {
    throw ConfigError("mamba state and conv width must be positive");
  }
  if (modality == Modality::kRgb || modality == Modality::kHyper3) {
    if (in_channels != 3) throw ConfigError(modality_name(modality) + " input has 3 channels");
  } else if (modality == Modality::kFused && in_channels != 6) {
    throw ConfigError("fused input has 6 channels");
  }
}

std::string NetworkConfig::serialize() const {
  std::ostringstream os;
  os << "modality=" << modality_name(modality) << " in_channels=" << in_channels
     << " num_classes=" << num_classes << " widths=" << widths.at(0) << ',' << widths.at(1)
     << " comprehensive_attention=" << use_comprehensive_attention << " mamba=" << use_mamba
     << " weighted_fusion=" << use_weighted_fusion << " reduction=" << reduction << " state=" << state
     << " conv_width=" << conv_width << " seed=" << seed;
  return os.str();
}

NetworkConfig NetworkConfig::parse(const std::string& text) {
  NetworkConfig cfg;
  std::istringstream is(text);
  std::string token;
  auto to_size = [](const std::string& key, const std::string& v) -> std::size_t {
    std::size_t used = 0;
    unsigned long long n = 0;
    try {
      n = std::stoull(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty()) throw ConfigError("config: bad value '" + v + "' for " + key);
    return static_cast<std::size_t>(n);
  };
  auto to_flag = [](const std::string& key, const std::string& v) {
    if (v == "0") return false;
    if (v == "1") return true;
    throw ConfigError("config: bad flag '" + v + "' for " + key);
  };
  while (is >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ConfigError("config: malformed token '" + token + "'");
    const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
    if (key == "modality") {
      cfg.modality = parse_modality(value);
    } else if (key == "in_channels") {
      cfg.in_channels = to_size(key, value);
    } else if (key == "num_classes") {
      cfg.num_classes = to_size(key, value);
    } else if (key == "widths") {
      const auto comma = value.find(',');
      if (comma == std::string::npos) throw ConfigError("config: widths needs two values");
      cfg.widths = {to_size(key, value.substr(0, comma)), to_size(key, value.substr(comma + 1))};
    } else if (key == "comprehensive_attention") {
      cfg.use_comprehensive_attention = to_flag(key, value);
    } else if (key == "mamba") {
      cfg.use_mamba = to_flag(key, value);
    } else if (key == "weighted_fusion") {
      cfg.use_weighted_fusion = to_flag(key, value);
    } else if (key == "reduction") {
      cfg.reduction = to_size(key, value);
    } else if (key == "state") {
      cfg.state = to_size(key, value);
    } else if (key == "conv_width") {
      cfg.conv_width = to_size(key, value);
    } else if (key == "seed") {
      cfg.seed = to_size(key, value);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

NetworkConfig NetworkConfig::with_ablation(Ablation a) const {
  NetworkConfig cfg = *this;
  cfg.use_comprehensive_attention = a == Ablation::kComprehensiveAttention || a == Ablation::kAll;
  cfg.use_mamba = a == Ablation::kMamba || a == Ablation::kAll;
  cfg.use_weighted_fusion = a == Ablation::kWeightedFusion || a == Ablation::kAll;
  return cfg;
}

Network::Network(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  nn::Initializer init(config_.seed);
  const std::size_t w0 = config_.widths[0], w1 = config_.widths[1];
  const ops::Conv2dOptions down{2, 1, 1};
  const ops::Conv2dOptions same{1, 1, 1};

  enc1_conv_ = nn::Conv2d::create(store_, init, "encoder.stage1.conv", config_.in_channels, w0, 3, down, false);
  enc1_norm_ = nn::BatchNorm2d::create(store_, "encoder.stage1.norm", w0);
  enc2_conv_ = nn::Conv2d::create(store_, init, "encoder.stage2.conv", w0, w1, 3, down, false);
  enc2_norm_ = nn::BatchNorm2d::create(store_, "encoder.stage2.norm", w1);
  up_conv_ = nn::Conv2d::create(store_, init, "decoder.up.conv", w1, w1, 3, same, false);
  up_norm_ = nn::BatchNorm2d::create(store_, "decoder.up.norm", w1);
  merge_conv_ = nn::Conv2d::create(store_, init, "decoder.merge", w1 + w0, w0, 1);

  attention::AttentionFlags flags{config_.use_comprehensive_attention, config_.use_mamba,
                                  config_.use_weighted_fusion};
  attention::AttentionSizes sizes;
  sizes.reduction = config_.reduction;
  sizes.state = config_.state;
  sizes.conv_width = config_.conv_width;
  cab_ = attention::ComprehensiveAttention::create(store_, init, "decoder.cab", w0, flags, sizes);

  head_ = nn::Conv2d::create(store_, init, "head", w0, config_.num_classes, 1);
}

Var Network::forward(Tape& tape, Var input, ops::NormMode mode) const {
  const Tensor& x = input.value();
  require_rank(x, 4, "network input");
  if (x.dim(1) != config_.in_channels) {
    throw ShapeError("network expects " + std::to_string(config_.in_channels) + " input channels, got " +
                     shape_to_string(x.shape()));
  }
  const std::size_t h = x.dim(2), w = x.dim(3);
  if (h % 4 != 0 || w % 4 != 0) {
    throw ShapeError("network input height and width must be divisible by 4, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  }

  Var half, quarter;
  {
    Tape::Scope scope(tape, "encoder");
    half = ops::relu(enc1_norm_(tape, enc1_conv_(tape, input), mode));
    quarter = ops::relu(enc2_norm_(tape, enc2_conv_(tape, half), mode));
  }
  Var features;
  {
    Tape::Scope scope(tape, "decoder");
    Var up = ops::bilinear_resize(quarter, h / 2, w / 2);
    up = ops::relu(up_norm_(tape, up_conv_(tape, up), mode));
    features = merge_conv_(tape, ops::concat_channels(up, half));
    Tape::Scope cab_scope(tape, "cab");
    features = cab_(tape, features, mode);
  }
  Tape::Scope scope(tape, "head");
  return head_(tape, ops::bilinear_resize(features, h, w));
}

Tensor Network::predict_logits(const Tensor& input) const {
  Tape tape;
  return forward(tape, tape.constant(input), ops::NormMode::kEval).value();
}

std::size_t modality_channels(Modality modality, std::size_t bands) {
  switch (modality) {
    case Modality::kRgb:
    case Modality::kHyper3:
      return 3;
    case Modality::kFused:
      return 6;
    case Modality::kSpectral:
      return bands;
  }
  return 0;
}

Tensor make_input(Modality modality, const io::HyperCube& cube, const Tensor& rgb) {
  switch (modality) {
    case Modality::kRgb:
      return rgb;
    case Modality::kHyper3:
      return fusion::project_hyper3(cube, fusion::fit_pca(cube));
    case Modality::kFused:
      return fusion::fuse(rgb, fusion::project_hyper3(cube, fusion::fit_pca(cube)));
    case Modality::kSpectral: {
      cube.validate();
      std::vector<double> values(cube.data.begin(), cube.data.end());
      return Tensor(Shape{1, cube.bands, cube.height, cube.width}, std::move(values));
    }
  }
  throw ConfigError("unknown modality");
}

void save_checkpoint(const Network& network, const std::filesystem::path& path) {
  io::write_checkpoint(network.config().serialize(), network.parameters(), path);
}

Network load_network(const std::filesystem::path& path) {
  const io::Checkpoint ckpt = io::read_checkpoint(path);
  Network network(NetworkConfig::parse(ckpt.config));
  io::restore_parameters(ckpt, network.parameters());
  return network;
}

void load_checkpoint(Network& network, const std::filesystem::path& path) {
  const io::Checkpoint ckpt = io::read_checkpoint(path);
  const NetworkConfig recorded = NetworkConfig::parse(ckpt.config);
  if (!(recorded == network.config())) {
    throw ConfigError("checkpoint config '" + ckpt.config + "' does not match network config '" +
                      network.config().serialize() + "'");
  }
  io::restore_parameters(ckpt, network.parameters());
}

}  // namespace fusionsort::net
