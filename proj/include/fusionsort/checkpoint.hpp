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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fusionsort/tape.hpp"

namespace fusionsort::io {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  bool trainable = true;
  Tensor value;
};

/// Decoded checkpoint: the serialized network configuration plus every
/// named tensor in manifest (lexicographic) order.
struct Checkpoint {
  std::string config;
  std::vector<CheckpointEntry> entries;
};

// Layout:
//   FUSIONSORT-CHECKPOINT <version>\n
//   config <text>\n
//   param <name> <trainable 0|1> <rank> <extent>...\n   (one per tensor)
//   DATA\n
//   float64 little-endian values in manifest order
std::vector<std::uint8_t> encode_checkpoint(const std::string& config, const ParameterStore& store);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::string& config, const ParameterStore& store,
                      const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `store`. Every entry must match a stored
/// tensor by name and shape and every stored tensor must be present; all
/// checks run before the first value is written.
void restore_parameters(const Checkpoint& ckpt, ParameterStore& store);

}  // namespace fusionsort::io
