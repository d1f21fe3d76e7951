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

#include "pcal/dataset.hpp"

#include <cmath>
#include <string>

#include "pcal/errors.hpp"

namespace pcal {

std::size_t ScanRecord::valid_count() const {
  std::size_t n = 0;
  for (auto label : labels) n += label != kIgnoreLabel;
  return n;
}

void ScanRecord::validate() const {
  if (n_classes < 2) {
    throw ValidationError("scan needs at least 2 classes, has " +
                          std::to_string(n_classes));
  }
  const std::size_t n = points.size();
  if (labels.size() != n || logits.size() != n * static_cast<std::size_t>(n_classes)) {
    throw ValidationError("scan arrays disagree on the point count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ValidationError("non-finite coordinate at point " + std::to_string(i));
    }
    if (labels[i] != kIgnoreLabel && labels[i] >= n_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " at point " +
                            std::to_string(i) + " is outside [0, " +
                            std::to_string(n_classes) + ")");
    }
    for (double z : logits_of(i)) {
      if (!std::isfinite(z)) {
        throw ValidationError("non-finite logit at point " + std::to_string(i));
      }
    }
  }
}

std::size_t Dataset::point_count() const {
  std::size_t n = 0;
  for (const auto& scan : scans) n += scan.size();
  return n;
}

std::size_t Dataset::valid_point_count() const {
  std::size_t n = 0;
  for (const auto& scan : scans) n += scan.valid_count();
  return n;
}

ScanPredictions uncalibrated_predictions(const ScanRecord& scan) {
  ScanPredictions out;
  out.classes.resize(scan.size());
  out.confidences.resize(scan.size());
  std::vector<double> probs(static_cast<std::size_t>(scan.n_classes));
  for (std::size_t i = 0; i < scan.size(); ++i) {
    softmax_scaled(scan.logits_of(i), 1.0, probs);
    const auto pred = predict(probs);
    out.classes[i] = pred.class_id;
    out.confidences[i] = pred.confidence;
  }
  return out;
}

}  // namespace pcal
