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

#include "fusionsort/metrics.hpp"

#include <cstdio>
#include <numeric>

#include "fusionsort/errors.hpp"

namespace fusionsort::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(const io::LabelMask& pred, const io::LabelMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.labels.size() != gt.labels.size()) {
    throw ShapeError("evaluate: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  pred.check_classes(k_);
  gt.check_classes(k_);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) ++counts_[gt.labels[i] * k_ + pred.labels[i]];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ShapeError("cannot merge confusion matrices of different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

SegmentationReport summarize(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  SegmentationReport r;
  r.iou.resize(k);
  r.pixels = cm.total();
  std::uint64_t correct = 0;
  double iou_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::uint64_t tp = cm.at(c, c);
    std::uint64_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    correct += tp;
    const std::uint64_t uni = tp + fp + fn;
    if (uni == 0) continue;
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    iou_sum += *r.iou[c];
    ++present;
  }
  r.miou = present ? iou_sum / static_cast<double>(present) : 0.0;
  r.pixel_accuracy = r.pixels ? static_cast<double>(correct) / static_cast<double>(r.pixels) : 0.0;
  return r;
}

SegmentationReport evaluate(const io::LabelMask& pred, const io::LabelMask& gt, std::size_t num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, gt);
  return summarize(cm);
}

io::LabelMask argmax_labels(const Tensor& logits, std::size_t n) {
  require_rank(logits, 4, "argmax_labels");
  const std::size_t k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (n >= logits.dim(0)) throw ShapeError("argmax_labels: batch index out of range");
  if (k > 256) throw ShapeError("argmax_labels: more than 256 classes");
  io::LabelMask mask(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (logits.at(n, c, y, x) > logits.at(n, best, y, x)) best = c;
      }
      mask.at(y, x) = static_cast<std::uint8_t>(best);
    }
  return mask;
}

std::string format_report_text(const SegmentationReport& r) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-16s %10s\n", "class", "iou");
  out += line;
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    if (r.iou[c]) {
      std::snprintf(line, sizeof line, "%-16zu %10.6f\n", c, *r.iou[c]);
    } else {
      std::snprintf(line, sizeof line, "%-16zu %10s\n", c, "absent");
    }
    out += line;
  }
  std::snprintf(line, sizeof line, "%-16s %10.6f\n", "miou", r.miou);
  out += line;
  std::snprintf(line, sizeof line, "%-16s %10.6f\n", "pixel_accuracy", r.pixel_accuracy);
  out += line;
  return out;
}

std::string format_report_csv(const SegmentationReport& r) {
  std::string out;
  char line[128];
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    if (r.iou[c]) {
      std::snprintf(line, sizeof line, "class,%zu,%.6f\n", c, *r.iou[c]);
    } else {
      std::snprintf(line, sizeof line, "class,%zu,absent\n", c);
    }
    out += line;
  }
  std::snprintf(line, sizeof line, "miou,%.6f\npixel_accuracy,%.6f\n", r.miou, r.pixel_accuracy);
  out += line;
  return out;
}

}  // namespace fusionsort::metrics
