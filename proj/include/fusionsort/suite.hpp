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

#include <cstdint>
#include <string>
#include <vector>

#include "fusionsort/network.hpp"

namespace fusionsort::net {

struct BlockCheck {
  std::string block;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t coordinates = 0;
  std::string worst_parameter;

  bool passed() const { return max_rel_error < tolerance; }
};

inline constexpr double kBlockTolerance = 1e-4;
inline constexpr double kLossTolerance = 1e-6;

/// Gradient checks for every building block and for the full network on a
/// 1x6x8x8 input built from `config`. Block inputs and weights are drawn
/// from `seed`; batch norm runs in eval mode throughout.
std::vector<BlockCheck> run_gradcheck_suite(const NetworkConfig& config, double eps, std::uint64_t seed);

}  // namespace fusionsort::net
