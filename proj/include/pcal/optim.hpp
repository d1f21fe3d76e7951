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

#ifndef PCAL_OPTIM_HPP
#define PCAL_OPTIM_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pcal/calibrators.hpp"
#include "pcal/dataset.hpp"

namespace pcal {

enum class EtaEstimator {
  kMidpoint,   // midpoint of the class-conditional mean entropies
  kHistogram,  // crossing point of the two entropy histograms
};

struct FitConfig {
  int epochs = 20;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  int batch_scans = 8;
  std::uint64_t seed = 0;
  int m_bins = 10;
  EntropyKind entropy_kind = EntropyKind::kShannon;
  // Subsample correct points per batch when fitting DeptS (off by default,
  // see README).
  bool balanced_sampling = false;
  // Fixed threshold for MetaC/DeptS; selected from the fit set when empty.
  std::optional<double> eta;
  EtaEstimator eta_estimator = EtaEstimator::kMidpoint;

  void validate() const;
};

// Flat set of valid points pooled from one or more scans.
struct PointSet {
  int n_classes = 0;
  std::vector<double> logits;  // point-major, n_classes per point
  std::vector<int> labels;
  std::vector<double> depths;

  std::size_t size() const { return labels.size(); }
  std::span<const double> logits_of(std::size_t i) const {
    return {logits.data() + i * static_cast<std::size_t>(n_classes),
            static_cast<std::size_t>(n_classes)};
  }
  void append(const ScanRecord& scan);  // valid points only
  void append_point(const PointSet& other, std::size_t i);
};

PointSet collect_points(const Dataset& data, std::span<const std::size_t> scan_indices);

// -(1/N) sum ln max(p_i[y_i], kProbFloor). Throws EmptyBatch when N == 0.
double nll_loss(std::span<const ProbVector> probs, std::span<const int> labels);

// Parameter vector layout used by the optimizer:
//   temps/metac: [T]   logis/diris: [w_0..w_{S-1}, b_0..b_{S-1}]
//   depts: [t_high, t_low, k1, k2]
std::vector<double> pack_params(const CalibratorParams& params);
CalibratorParams unpack_params(const CalibratorParams& like, std::span<const double> theta);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as pack_params
};

// Mean NLL of the calibrated batch and its analytic gradient. For MetaC the
// loss is the temperature-scaled NLL on every point; its random branch has no
// parameters.
LossAndGradient nll_and_gradient(const CalibratorParams& params, const PointSet& batch);
double batch_nll(const CalibratorParams& params, const PointSet& batch);

struct AdamWState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using Projection = std::function<void(std::span<double>)>;

// One decoupled-weight-decay Adam update followed by `project`.
void adamw_step(AdamWState& state, std::span<double> theta, std::span<const double> grads,
                double lr, double weight_decay, const Projection& project = {});

// Clamp T, T1, T2, k1 to kMinTemperature; for DeptS also raise k2 so that
// alpha >= kMinTemperature down to `min_depth`.
void project_feasible(Method method, std::span<double> theta, double min_depth);

// Throws DegenerateSplit when either the correct or incorrect partition of
// the uncalibrated predictions is empty.
double select_entropy_threshold(const PointSet& points, EntropyKind kind,
                                EtaEstimator estimator = EtaEstimator::kMidpoint);

// All incorrect points plus correct points [s, s + floor(n_pos / 2)) with s
// uniform on [1, floor(n_pos / 3)], in input order within each group.
// Throws TooFewPositives when fewer than 3 points are correct.
PointSet depts_batch_sampler(const PointSet& batch, std::mt19937_64& rng);

// Fits `method` on the listed scans of `data`.
Calibrator fit(Method method, const Dataset& data, std::span<const std::size_t> scan_indices,
               const FitConfig& config);
// Fits on every scan.
Calibrator fit(Method method, const Dataset& data, const FitConfig& config);

}  // namespace pcal

#endif  // PCAL_OPTIM_HPP
