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

#include "pcal/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "pcal/errors.hpp"

namespace pcal {
namespace {

void check_finite(std::span<const double> logits) {
  for (std::size_t s = 0; s < logits.size(); ++s) {
    if (!std::isfinite(logits[s])) {
      throw NonFiniteLogit("non-finite logit at class " + std::to_string(s));
    }
  }
}

void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionMismatch(std::string(what) + " has " + std::to_string(got) +
                            " entries, logits have " + std::to_string(want));
  }
}

CalibratedPoint finish(ProbVector probs) {
  const auto pred = predict(probs);
  return {pred, std::move(probs)};
}

CalibratedPoint affine_softmax(std::span<const double> inputs,
                               std::span<const double> weights,
                               std::span<const double> bias) {
  ProbVector scaled(inputs.size());
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    scaled[s] = weights[s] * inputs[s] + bias[s];
  }
  ProbVector probs(inputs.size());
  softmax_scaled(scaled, 1.0, probs);
  return finish(std::move(probs));
}

void require_temperature(double value, const char* name) {
  if (!(value >= kMinTemperature) || !std::isfinite(value)) {
    throw ValidationError(std::string(name) + " must be >= " +
                          std::to_string(kMinTemperature) + ", got " +
                          std::to_string(value));
  }
}

void require_finite(std::span<const double> values, const char* name) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError(std::string(name) + " has a non-finite entry");
  }
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kTempS: return "temps";
    case Method::kLogiS: return "logis";
    case Method::kDiriS: return "diris";
    case Method::kMetaC: return "metac";
    case Method::kDeptS: return "depts";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  if (name == "temps") return Method::kTempS;
  if (name == "logis") return Method::kLogiS;
  if (name == "diris") return Method::kDiriS;
  if (name == "metac") return Method::kMetaC;
  if (name == "depts") return Method::kDeptS;
  throw ValidationError("unknown calibration method '" + std::string(name) +
                        "' (expected temps, logis, diris, metac or depts)");
}

Method method_of(const CalibratorParams& params) {
  return static_cast<Method>(params.index());
}

CalibratorParams initial_params(Method method, int n_classes) {
  const auto s = static_cast<std::size_t>(n_classes);
  switch (method) {
    case Method::kTempS: return TempSParams{};
    case Method::kLogiS: return LogiSParams{std::vector<double>(s, 1.0), std::vector<double>(s, 0.0)};
    case Method::kDiriS: return DiriSParams{std::vector<double>(s, 1.0), std::vector<double>(s, 0.0)};
    case Method::kMetaC: return MetaCParams{};
    case Method::kDeptS: return DeptSParams{};
  }
  return TempSParams{};
}

void validate_params(const CalibratorParams& params, int n_classes) {
  const auto s = static_cast<std::size_t>(n_classes);
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TempSParams>) {
          require_temperature(p.temperature, "temperature");
        } else if constexpr (std::is_same_v<P, LogiSParams> || std::is_same_v<P, DiriSParams>) {
          if (p.weights.size() != s || p.bias.size() != s) {
            throw DimensionMismatch("calibrator has " + std::to_string(p.weights.size()) +
                                    " weights / " + std::to_string(p.bias.size()) +
                                    " biases for " + std::to_string(s) + " classes");
          }
          require_finite(p.weights, "weights");
          require_finite(p.bias, "bias");
        } else if constexpr (std::is_same_v<P, MetaCParams>) {
          require_temperature(p.temperature, "temperature");
          if (std::isnan(p.eta) || p.eta < 0.0) throw ValidationError("eta must be >= 0");
        } else {
          require_temperature(p.t_high, "t_high");
          require_temperature(p.t_low, "t_low");
          require_temperature(p.k1, "k1");
          if (!std::isfinite(p.k2)) throw ValidationError("k2 must be finite");
          if (std::isnan(p.eta) || p.eta < 0.0) throw ValidationError("eta must be >= 0");
        }
      },
      params);
}

CalibratedPoint apply_temps(const TempSParams& params, std::span<const double> logits) {
  check_finite(logits);
  ProbVector probs(logits.size());
  softmax_scaled(logits, 1.0 / params.temperature, probs);
  return finish(std::move(probs));
}

CalibratedPoint apply_logis(const LogiSParams& params, std::span<const double> logits) {
  check_finite(logits);
  check_size(params.weights.size(), logits.size(), "weight vector");
  check_size(params.bias.size(), logits.size(), "bias vector");
  return affine_softmax(logits, params.weights, params.bias);
}

CalibratedPoint apply_diris(const DiriSParams& params, std::span<const double> logits) {
  check_finite(logits);
  check_size(params.weights.size(), logits.size(), "weight vector");
  check_size(params.bias.size(), logits.size(), "bias vector");
  ProbVector log_probs(logits.size());
  softmax_scaled(logits, 1.0, log_probs);
  for (double& p : log_probs) p = std::log(std::max(p, kProbFloor));
  return affine_softmax(log_probs, params.weights, params.bias);
}

CalibratedPoint apply_metac(const MetaCParams& params, std::span<const double> logits,
                            SplitMix64& rng) {
  check_finite(logits);
  ProbVector base(logits.size());
  softmax_scaled(logits, 1.0, base);
  if (entropy(base, params.entropy_kind) > params.eta) {
    const int n = static_cast<int>(logits.size());
    std::uniform_int_distribution<int> pick(0, n - 1);
    const double uniform = 1.0 / static_cast<double>(n);
    return {{pick(rng), uniform}, ProbVector(logits.size(), uniform)};
  }
  return apply_temps({params.temperature}, logits);
}

CalibratedPoint apply_depts(const DeptSParams& params, std::span<const double> logits,
                            const PointXYZ& p) {
  check_finite(logits);
  const double alpha = params.alpha(depth(p));
  if (!(alpha >= kMinTemperature)) {
    throw NonPositiveAlpha("depth coefficient alpha = " + std::to_string(alpha) +
                           " is below " + std::to_string(kMinTemperature));
  }
  ProbVector probs(logits.size());
  softmax_scaled(logits, 1.0, probs);
  const double t = entropy(probs, params.entropy_kind) > params.eta ? params.t_high
                                                                     : params.t_low;
  softmax_scaled(logits, 1.0 / (alpha * t), probs);
  return finish(std::move(probs));
}

ScanPredictions apply_to_scan(const CalibratorParams& params, const ScanRecord& scan,
                              std::size_t scan_index, std::uint64_t seed) {
  validate_params(params, scan.n_classes);
  ScanPredictions out;
  out.classes.resize(scan.size());
  out.confidences.resize(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const auto logits = scan.logits_of(i);
    CalibratedPoint point;
    switch (method_of(params)) {
      case Method::kTempS: point = apply_temps(std::get<TempSParams>(params), logits); break;
      case Method::kLogiS: point = apply_logis(std::get<LogiSParams>(params), logits); break;
      case Method::kDiriS: point = apply_diris(std::get<DiriSParams>(params), logits); break;
      case Method::kMetaC: {
        SplitMix64 rng(seed, scan_index, i);
        point = apply_metac(std::get<MetaCParams>(params), logits, rng);
        break;
      }
      case Method::kDeptS:
        try {
          point = apply_depts(std::get<DeptSParams>(params), logits, scan.points[i]);
        } catch (const NonPositiveAlpha& e) {
          throw NonPositiveAlpha("scan " + std::to_string(scan_index) + ", point " +
                                 std::to_string(i) + ": " + e.what());
        }
        break;
    }
    out.classes[i] = point.prediction.class_id;
    out.confidences[i] = point.prediction.confidence;
  }
  return out;
}

}  // namespace pcal
