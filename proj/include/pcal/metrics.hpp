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

#ifndef PCAL_METRICS_HPP
#define PCAL_METRICS_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pcal/dataset.hpp"

namespace pcal {

inline constexpr int kDefaultBins = 10;
inline constexpr int kDepthBins = 10;
inline constexpr double kDepthBinWidth = 5.0;  // meters

// Accumulator for one confidence bin (lower, upper].
struct BinStats {
  double lower = 0.0;
  double upper = 1.0;
  std::uint64_t count = 0;
  double sum_conf = 0.0;
  std::uint64_t sum_correct = 0;

  double mean_conf() const { return count ? sum_conf / static_cast<double>(count) : 0.0; }
  double mean_acc() const {
    return count ? static_cast<double>(sum_correct) / static_cast<double>(count) : 0.0;
  }
  double gap() const { return count ? mean_acc() - mean_conf() : 0.0; }

  void merge(const BinStats& other);
};

// m_bins equal-width bins over [0, 1]; bin m covers (m/M, (m+1)/M].
std::vector<BinStats> make_bins(int m_bins);

// Index of the bin with lower < conf <= upper, using the same bounds as
// make_bins. Confidences at or below 0 return -1.
int bin_index(double conf, int m_bins);

void accumulate(std::vector<BinStats>& bins, double conf, bool correct);

// Sum over bins of (|B|/N) * |acc(B) - conf(B)|; N is the total count.
double ece_from_bins(std::span<const BinStats> bins);

// Binned ECE of one scan. Throws EmptyScan if there are no points and
// DomainError when m_bins < 1.
double ece_scan(std::span<const double> confidences,
                std::span<const std::uint8_t> correct, int m_bins = kDefaultBins);

struct DepthBinRow {
  double d_lower = 0.0;
  double d_upper = 0.0;
  std::uint64_t count = 0;
  double sum_conf = 0.0;
  std::uint64_t sum_correct = 0;

  double mean_conf() const { return count ? sum_conf / static_cast<double>(count) : 0.0; }
  double mean_acc() const {
    return count ? static_cast<double>(sum_correct) / static_cast<double>(count) : 0.0;
  }
};

// min(floor(d / 5), 9); beyond-range points clamp into the last bin.
int depth_bin_index(double d);

struct IouResult {
  std::vector<std::optional<double>> per_class;  // nullopt: class absent
  double miou = 0.0;
};

struct EvalReport {
  int m_bins = kDefaultBins;
  int n_classes = 0;
  std::size_t n_valid_points = 0;
  double dataset_ece = 0.0;
  double pooled_ece = 0.0;  // diagnostic, all points in one binning
  std::vector<double> per_scan_ece;
  std::vector<BinStats> reliability;
  std::vector<DepthBinRow> depth_profile;
  IouResult iou;
};

// Produces the predictions of scan i (calibrated or not).
using PredictionSource = std::function<ScanPredictions(std::size_t scan_index)>;

struct EceResult {
  double dataset_ece = 0.0;
  std::vector<double> per_scan_ece;
};

EceResult ece_dataset(const Dataset& data, int m_bins = kDefaultBins);
std::vector<BinStats> reliability_bins(const Dataset& data, int m_bins = kDefaultBins);
std::vector<DepthBinRow> depth_profile(const Dataset& data);
IouResult iou(const Dataset& data);

// Full report over the dataset. `source` defaults to the raw softmax.
// Per-scan work runs on `threads` workers; the result is identical for any
// thread count.
EvalReport evaluate(const Dataset& data, int m_bins = kDefaultBins,
                    const PredictionSource& source = {}, unsigned threads = 1);

}  // namespace pcal

#endif  // PCAL_METRICS_HPP
