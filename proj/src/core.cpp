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

#include "pcal/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcal/errors.hpp"

namespace pcal {

std::string_view to_string(EntropyKind kind) {
  return kind == EntropyKind::kShannon ? "shannon" : "conf_entropy";
}

EntropyKind entropy_kind_from_string(std::string_view name) {
  if (name == "shannon") return EntropyKind::kShannon;
  if (name == "conf_entropy" || name == "conf") return EntropyKind::kConfEntropy;
  throw ValidationError("unknown entropy kind '" + std::string(name) +
                        "' (expected shannon or conf_entropy)");
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionMismatch("softmax of an empty vector");
  for (std::size_t s = 0; s < logits.size(); ++s) {
    if (!std::isfinite(logits[s])) {
      throw NonFiniteLogit("non-finite logit at class " + std::to_string(s));
    }
  }
  ProbVector out(logits.size());
  softmax_scaled(logits, 1.0, out);
  return out;
}

void softmax_scaled(std::span<const double> logits, double scale,
                    std::span<double> out) {
  double max_value = logits[0] * scale;
  for (double z : logits) max_value = std::max(max_value, z * scale);
  double total = 0.0;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    out[s] = std::exp(logits[s] * scale - max_value);
    total += out[s];
  }
  const double inv = 1.0 / total;
  for (double& p : out) p *= inv;
}

void log_softmax_scaled(std::span<const double> logits, double scale,
                        std::span<double> out) {
  double max_value = logits[0] * scale;
  for (double z : logits) max_value = std::max(max_value, z * scale);
  double total = 0.0;
  for (double z : logits) total += std::exp(z * scale - max_value);
  const double log_norm = max_value + std::log(total);
  for (std::size_t s = 0; s < logits.size(); ++s) {
    out[s] = logits[s] * scale - log_norm;
  }
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t s = 1; s < values.size(); ++s) {
    if (values[s] > values[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(s);
    }
  }
  return best;
}

Prediction predict(std::span<const double> probs) {
  const int best = argmax(probs);
  return {best, probs[static_cast<std::size_t>(best)]};
}

double shannon_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(std::max(p, kProbFloor));
  }
  return std::max(h, 0.0);
}

double confidence_entropy(double conf) {
  if (!(conf > 0.0) || conf > 1.0) {
    throw DomainError("confidence must lie in (0, 1], got " +
                      std::to_string(conf));
  }
  return -conf * std::log(std::max(conf, kProbFloor));
}

double entropy(std::span<const double> probs, EntropyKind kind) {
  if (kind == EntropyKind::kShannon) return shannon_entropy(probs);
  return confidence_entropy(predict(probs).confidence);
}

double depth(const PointXYZ& p) {
  return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
}

void CompensatedSum::add(double value) {
  const double t = sum_ + value;
  if (std::abs(sum_) >= std::abs(value)) {
    compensation_ += (sum_ - t) + value;
  } else {
    compensation_ += (value - t) + sum_;
  }
  sum_ = t;
}

SplitMix64::SplitMix64(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
    : state_(seed) {
  // Fold the stream coordinates in through the output mixer so nearby
  // (a, b) pairs land on unrelated states.
  state_ = (*this)() ^ a;
  state_ = (*this)() ^ b;
  state_ = (*this)();
}

SplitMix64::result_type SplitMix64::operator()() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace pcal
