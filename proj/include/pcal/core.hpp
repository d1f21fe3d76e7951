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

#ifndef PCAL_CORE_HPP
#define PCAL_CORE_HPP

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace pcal {

// Probabilities are clamped to this floor before any logarithm.
inline constexpr double kProbFloor = 1e-12;
// Lower bound for every temperature-like parameter (T, T1, T2, k1, alpha).
inline constexpr double kMinTemperature = 1e-4;

using ProbVector = std::vector<double>;

struct Prediction {
  int class_id = 0;
  double confidence = 0.0;
};

struct PointXYZ {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const PointXYZ&) const = default;
};

// Which uncertainty score drives the entropy guard of MetaC and DeptS.
enum class EntropyKind {
  kShannon,      // -sum_s p_s ln p_s over the full softmax
  kConfEntropy,  // -c ln c on the max probability only
};

std::string_view to_string(EntropyKind kind);
EntropyKind entropy_kind_from_string(std::string_view name);

// Max-subtracted softmax. Throws NonFiniteLogit on NaN/Inf input.
ProbVector softmax(std::span<const double> logits);

// Writes softmax(logits * scale) into `out` without validation; used on hot
// paths where the logits were validated when the scan was loaded.
void softmax_scaled(std::span<const double> logits, double scale,
                    std::span<double> out);

// log-softmax of logits * scale, written to `out`.
void log_softmax_scaled(std::span<const double> logits, double scale,
                        std::span<double> out);

// Argmax with ties resolved toward the lowest index.
Prediction predict(std::span<const double> probs);
int argmax(std::span<const double> values);

double shannon_entropy(std::span<const double> probs);
double confidence_entropy(double conf);
double entropy(std::span<const double> probs, EntropyKind kind);

double depth(const PointXYZ& p);

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double value);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

// SplitMix64; cheap enough to instantiate once per point, so random draws
// can be keyed by (seed, scan, point) independently of scheduling.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  SplitMix64(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()();

 private:
  std::uint64_t state_;
};

}  // namespace pcal

#endif  // PCAL_CORE_HPP
