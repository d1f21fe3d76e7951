/*
 * Copyright 2026 The pcal Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PCAL_DATASET_HPP
#define PCAL_DATASET_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pcal/core.hpp"

namespace pcal {

inline constexpr std::uint16_t kIgnoreLabel = 65535;

// One point cloud: coordinates, ground truth and raw logits, row-major
// (point-major) with n_classes entries per point.
struct ScanRecord {
  int n_classes = 0;
  std::vector<PointXYZ> points;
  std::vector<std::uint16_t> labels;
  std::vector<double> logits;

  std::size_t size() const { return points.size(); }
  bool is_valid(std::size_t i) const { return labels[i] != kIgnoreLabel; }
  std::size_t valid_count() const;

  std::span<const double> logits_of(std::size_t i) const {
    return {logits.data() + i * static_cast<std::size_t>(n_classes),
            static_cast<std::size_t>(n_classes)};
  }
  std::span<double> logits_of(std::size_t i) {
    return {logits.data() + i * static_cast<std::size_t>(n_classes),
            static_cast<std::size_t>(n_classes)};
  }

  // Throws ValidationError when sizes disagree, a label is out of range or a
  // value is non-finite.
  void validate() const;

  bool operator==(const ScanRecord&) const = default;
};

struct Dataset {
  int n_classes = 0;
  std::vector<ScanRecord> scans;

  std::size_t point_count() const;
  std::size_t valid_point_count() const;
};

// Per-point output of a calibrator (or of the raw softmax).
struct ScanPredictions {
  std::vector<int> classes;
  std::vector<double> confidences;

  std::size_t size() const { return classes.size(); }
};

// Uncalibrated softmax predictions of every point in the scan.
ScanPredictions uncalibrated_predictions(const ScanRecord& scan);

}  // namespace pcal

#endif  // PCAL_DATASET_HPP
