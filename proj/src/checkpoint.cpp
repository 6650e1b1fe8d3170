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

#include "fusionsort/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "fusionsort/data_io.hpp"
#include "fusionsort/errors.hpp"

namespace fusionsort::io {

namespace {

constexpr std::string_view kMagic = "FUSIONSORT-CHECKPOINT";

bool valid_token(const std::string& s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\n' || c == '\r' || c == '\t';
  });
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::string& config, const ParameterStore& store) {
  if (config.find('\n') != std::string::npos) throw ConfigError("checkpoint config must be one line");
  std::ostringstream header;
  header << kMagic << ' ' << kCheckpointVersion << '\n';
  header << "config " << config << '\n';
  const auto params = store.all();
  for (const Parameter* p : params) {
    if (!valid_token(p->name)) throw ConfigError("parameter name '" + p->name + "' has whitespace");
    header << "param " << p->name << ' ' << (p->trainable ? 1 : 0) << ' ' << p->value.rank();
    for (std::size_t e : p->value.shape()) header << ' ' << e;
    header << '\n';
  }
  header << "DATA\n";
  const std::string text = header.str();
  std::vector<std::uint8_t> out(text.begin(), text.end());
  for (const Parameter* p : params) {
    const std::size_t at = out.size();
    out.resize(at + p->value.numel() * sizeof(double));
    std::memcpy(out.data() + at, p->value.data().data(), p->value.numel() * sizeof(double));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::pair<std::string, std::size_t> {
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size()) throw FormatError("checkpoint: truncated manifest", bytes.size());
    std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                     bytes.begin() + static_cast<std::ptrdiff_t>(pos));
    ++pos;
    return {line, start};
  };

  Checkpoint ckpt;
  {
    auto [line, at] = next_line();
    std::istringstream is(line);
    std::string magic;
    int version = 0;
    if (!(is >> magic) || magic != kMagic) throw FormatError("checkpoint: bad magic", at);
    if (!(is >> version) || version != kCheckpointVersion) {
      throw FormatError("checkpoint: unsupported version", at + kMagic.size());
    }
  }
  {
    auto [line, at] = next_line();
    if (line.rfind("config ", 0) != 0) throw FormatError("checkpoint: missing config line", at);
    ckpt.config = line.substr(7);
  }
  std::size_t values = 0;
  for (;;) {
    auto [line, at] = next_line();
    if (line == "DATA") break;
    std::istringstream is(line);
    std::string tag;
    CheckpointEntry e;
    int trainable = -1;
    std::size_t rank = 0;
    if (!(is >> tag >> e.name >> trainable >> rank) || tag != "param" || (trainable != 0 && trainable != 1) ||
        rank == 0 || rank > 8) {
      throw FormatError("checkpoint: malformed manifest line '" + line + "'", at);
    }
    Shape shape(rank);
    for (std::size_t& extent : shape) {
      if (!(is >> extent) || extent == 0) throw FormatError("checkpoint: malformed extent", at);
    }
    std::string rest;
    if (is >> rest) throw FormatError("checkpoint: trailing manifest tokens", at);
    if (!ckpt.entries.empty() && !(ckpt.entries.back().name < e.name)) {
      throw FormatError("checkpoint: manifest not in strictly lexicographic order", at);
    }
    e.trainable = trainable == 1;
    e.value = Tensor(std::move(shape));
    values += e.value.numel();
    ckpt.entries.push_back(std::move(e));
  }

  const std::size_t expected = pos + values * sizeof(double);
  if (bytes.size() < expected) {
    throw FormatError("checkpoint: truncated data, expected " + std::to_string(expected) + " bytes, got " +
                          std::to_string(bytes.size()),
                      bytes.size());
  }
  if (bytes.size() > expected) throw FormatError("checkpoint: trailing bytes", expected);
  for (CheckpointEntry& e : ckpt.entries) {
    std::memcpy(e.value.data().data(), bytes.data() + pos, e.value.numel() * sizeof(double));
    if (!e.value.all_finite()) throw FormatError("checkpoint: non-finite value in " + e.name, pos);
    pos += e.value.numel() * sizeof(double);
  }
  return ckpt;
}

void write_checkpoint(const std::string& config, const ParameterStore& store,
                      const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(config, store));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void restore_parameters(const Checkpoint& ckpt, ParameterStore& store) {
  const auto params = store.all();
  if (params.size() != ckpt.entries.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.entries.size()) + " tensors, network has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const CheckpointEntry& e = ckpt.entries[i];
    if (params[i]->name != e.name || params[i]->value.shape() != e.value.shape() ||
        params[i]->trainable != e.trainable) {
      throw ConfigError("checkpoint tensor '" + e.name + "' " + shape_to_string(e.value.shape()) +
                        " does not match network tensor '" + params[i]->name + "' " +
                        shape_to_string(params[i]->value.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = ckpt.entries[i].value;
}

}  // namespace fusionsort::io
