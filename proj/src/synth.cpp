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

#include "pcal/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "pcal/errors.hpp"
#include "pcal/parallel.hpp"

namespace pcal {
namespace {

constexpr double kHeightRange = 3.0;

ScanRecord generate_scan(const SynthConfig& config, std::size_t scan_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(scan_index),
                    static_cast<std::uint32_t>(scan_index >> 32)};
  std::mt19937_64 rng(seq);
  std::gamma_distribution<double> gamma(config.dirichlet_alpha, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> height(-kHeightRange, kHeightRange);

  const auto n = static_cast<std::size_t>(config.points_per_scan);
  const auto s_count = static_cast<std::size_t>(config.n_classes);
  ScanRecord scan;
  scan.n_classes = config.n_classes;
  scan.points.resize(n);
  scan.labels.resize(n);
  scan.logits.resize(n * s_count);
  std::vector<double> p(s_count);

  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    do {
      total = 0.0;
      for (auto& v : p) total += (v = gamma(rng));
    } while (!(total > 0.0));
    for (auto& v : p) v /= total;

    const double u = unit(rng);
    std::size_t label = s_count - 1;
    double cum = 0.0;
    for (std::size_t s = 0; s < s_count; ++s) {
      cum += p[s];
      if (u < cum) {
        label = s;
        break;
      }
    }
    // Rounding can leave u just above the final cumulative sum; fall back to
    // the last class with positive mass.
    while (label > 0 && p[label] <= 0.0) --label;
    scan.labels[i] = static_cast<std::uint16_t>(label);

    const double r = config.scene_radius * std::sqrt(unit(rng));
    const double theta = 2.0 * std::numbers::pi * unit(rng);
    scan.points[i] = {r * std::cos(theta), r * std::sin(theta), height(rng)};

    auto z = scan.logits_of(i);
    for (std::size_t s = 0; s < s_count; ++s) z[s] = std::log(std::max(p[s], kProbFloor));
  }
  return scan;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_scans < 1) throw ValidationError("n_scans must be > 0");
  if (points_per_scan < 1) throw ValidationError("points_per_scan must be > 0");
  if (n_classes < 2 || n_classes >= 65535) {
    throw ValidationError("n_classes must be in [2, 65535)");
  }
  if (!(scene_radius > 0.0)) throw ValidationError("scene_radius must be > 0");
  if (!(dirichlet_alpha > 0.0) || !std::isfinite(dirichlet_alpha)) {
    throw ValidationError("dirichlet_alpha must be > 0");
  }
}

Dataset gen_calibrated(const SynthConfig& config, unsigned threads) {
  config.validate();
  Dataset data;
  data.n_classes = config.n_classes;
  data.scans.resize(static_cast<std::size_t>(config.n_scans));
  parallel_for(data.scans.size(), threads,
               [&](std::size_t i) { data.scans[i] = generate_scan(config, i); });
  return data;
}

Dataset distort_temperature(const Dataset& data, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ValidationError("temperature distortion requires tau > 0, got " + std::to_string(tau));
  }
  Dataset out = data;
  for (auto& scan : out.scans) {
    for (double& z : scan.logits) z = z * tau;
  }
  return out;
}

Dataset distort_depth(const Dataset& data, double kappa1, double kappa2) {
  if (!std::isfinite(kappa1) || !std::isfinite(kappa2)) {
    throw NonPositiveScale("depth distortion coefficients must be finite");
  }
  Dataset out = data;
  for (std::size_t k = 0; k < out.scans.size(); ++k) {
    auto& scan = out.scans[k];
    for (std::size_t i = 0; i < scan.size(); ++i) {
      const double factor = kappa1 * depth(scan.points[i]) + kappa2;
      if (!(factor > 0.0)) {
        throw NonPositiveScale("depth distortion factor " + std::to_string(factor) +
                               " <= 0 at scan " + std::to_string(k) + ", point " +
                               std::to_string(i));
      }
      for (double& z : scan.logits_of(i)) z = z * factor;
    }
  }
  return out;
}

}  // namespace pcal
