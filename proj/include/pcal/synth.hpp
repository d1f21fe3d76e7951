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

#ifndef PCAL_SYNTH_HPP
#define PCAL_SYNTH_HPP

#include <cstdint>

#include "pcal/dataset.hpp"

namespace pcal {

struct SynthConfig {
  int n_scans = 10;
  int points_per_scan = 1024;
  int n_classes = 8;
  double scene_radius = 50.0;  // meters
  std::uint64_t seed = 0;
  double dirichlet_alpha = 1.0;

  void validate() const;
};

// Perfectly calibrated scans: p ~ Dirichlet(alpha), y ~ Categorical(p),
// logits = ln max(p, kProbFloor), points uniform on the disc of
// scene_radius with height uniform in [-3, 3] m. Scan i draws from a stream
// derived from (seed, i), so the output does not depend on `threads`.
Dataset gen_calibrated(const SynthConfig& config, unsigned threads = 1);

// Logits multiplied by tau. Throws ValidationError unless tau > 0.
Dataset distort_temperature(const Dataset& data, double tau);

// Logits of each point multiplied by kappa1 * depth + kappa2. Throws
// NonPositiveScale if that factor is <= 0 for any point.
Dataset distort_depth(const Dataset& data, double kappa1, double kappa2);

}  // namespace pcal

#endif  // PCAL_SYNTH_HPP
