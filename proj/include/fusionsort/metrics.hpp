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
#include <optional>
#include <string>
#include <vector>

#include "fusionsort/data_io.hpp"
#include "fusionsort/tensor.hpp"

namespace fusionsort::metrics {

/// K x K pixel counts; rows are ground truth, columns prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void add(const io::LabelMask& pred, const io::LabelMask& gt);
  /// Adds another matrix's counts; shards merge in any order.
  void merge(const ConfusionMatrix& other);

  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }
  std::size_t num_classes() const { return k_; }
  std::uint64_t total() const;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

struct SegmentationReport {
  /// IoU per class; empty for classes absent from both prediction and truth.
  std::vector<std::optional<double>> iou;
  /// Mean over the classes that have an IoU.
  double miou = 0.0;
  double pixel_accuracy = 0.0;
  std::uint64_t pixels = 0;
};

SegmentationReport summarize(const ConfusionMatrix& cm);
SegmentationReport evaluate(const io::LabelMask& pred, const io::LabelMask& gt, std::size_t num_classes);

/// Per-pixel argmax over the class axis of logits [N,K,H,W] for batch item
/// `n`; ties resolve to the smaller class index.
io::LabelMask argmax_labels(const Tensor& logits, std::size_t n = 0);

/// Aligned, human-readable table with fixed 6-decimal values.
std::string format_report_text(const SegmentationReport& report);
/// Comma-separated lines: "class,<k>,<iou|absent>", "miou,<v>",
/// "pixel_accuracy,<v>".
std::string format_report_csv(const SegmentationReport& report);

}  // namespace fusionsort::metrics
