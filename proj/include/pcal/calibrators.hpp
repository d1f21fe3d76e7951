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

#ifndef PCAL_CALIBRATORS_HPP
#define PCAL_CALIBRATORS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pcal/core.hpp"
#include "pcal/dataset.hpp"

namespace pcal {

enum class Method { kTempS, kLogiS, kDiriS, kMetaC, kDeptS };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

struct TempSParams {
  double temperature = 1.0;

  bool operator==(const TempSParams&) const = default;
};

// Vector scaling: diagonal weights and a bias on the raw logits.
struct LogiSParams {
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const LogiSParams&) const = default;
};

// Same parameterization as LogiSParams, applied to log-probabilities.
struct DiriSParams {
  std::vector<double> weights;
  std::vector<double> bias;

  bool operator==(const DiriSParams&) const = default;
};

struct MetaCParams {
  double temperature = 1.0;
  double eta = 0.0;  // nats
  EntropyKind entropy_kind = EntropyKind::kShannon;

  bool operator==(const MetaCParams&) const = default;
};

// Depth-aware scaling. The effective temperature of point i is
// (k1 * depth_i + k2) * T, with T = t_high when the uncalibrated entropy
// exceeds eta and T = t_low otherwise.
struct DeptSParams {
  double t_high = 1.0;
  double t_low = 0.9;
  double k1 = 0.1;
  double k2 = 0.0;
  double eta = 0.0;  // nats
  EntropyKind entropy_kind = EntropyKind::kShannon;

  double alpha(double d) const { return k1 * d + k2; }

  bool operator==(const DeptSParams&) const = default;
};

using CalibratorParams =
    std::variant<TempSParams, LogiSParams, DiriSParams, MetaCParams, DeptSParams>;

Method method_of(const CalibratorParams& params);

// Identity-like starting point for fitting.
CalibratorParams initial_params(Method method, int n_classes);

// Throws ValidationError for infeasible or ill-sized parameters.
void validate_params(const CalibratorParams& params, int n_classes);

// Provenance of a fitted calibrator; serialized alongside the parameters.
struct FitMeta {
  int epochs = 0;
  double lr = 0.0;
  double weight_decay = 0.0;
  int batch_scans = 0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t steps = 0;
  double initial_nll = 0.0;
  double final_nll = 0.0;
  double final_grad_norm = 0.0;
  bool converged = false;
  bool reverted = false;
  bool balanced_sampling = false;
  std::optional<double> eta;
  std::string eta_estimator;  // "midpoint", "histogram" or "manual"
};

struct Calibrator {
  CalibratorParams params;
  int n_classes = 0;
  std::optional<FitMeta> meta;
};

struct CalibratedPoint {
  Prediction prediction;
  ProbVector probs;
};

CalibratedPoint apply_temps(const TempSParams& params, std::span<const double> logits);
CalibratedPoint apply_logis(const LogiSParams& params, std::span<const double> logits);
CalibratedPoint apply_diris(const DiriSParams& params, std::span<const double> logits);
// Draws the random class of the high-entropy branch from `rng`.
CalibratedPoint apply_metac(const MetaCParams& params, std::span<const double> logits,
                            SplitMix64& rng);
// Throws NonPositiveAlpha when k1 * depth(p) + k2 < kMinTemperature.
CalibratedPoint apply_depts(const DeptSParams& params, std::span<const double> logits,
                            const PointXYZ& p);

// Calibrated predictions for every point of a scan, in input order. MetaC
// draws are keyed by (seed, scan_index, point index).
ScanPredictions apply_to_scan(const CalibratorParams& params, const ScanRecord& scan,
                              std::size_t scan_index, std::uint64_t seed);

}  // namespace pcal

#endif  // PCAL_CALIBRATORS_HPP
