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

#include "pcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcal/errors.hpp"
#include "pcal/parallel.hpp"

namespace pcal {
namespace {

double bin_bound(int m, int m_bins) {
  return static_cast<double>(m) / static_cast<double>(m_bins);
}

void check_bins(int m_bins) {
  if (m_bins < 1) {
    throw DomainError("bin count must be >= 1, got " + std::to_string(m_bins));
  }
}

struct ScanPartial {
  double ece = 0.0;
  std::vector<BinStats> bins;
  std::vector<DepthBinRow> depth;
  std::vector<std::uint64_t> tp, fp, fn;
};

ScanPartial summarize_scan(const ScanRecord& scan, const ScanPredictions& preds,
                           int m_bins, std::size_t scan_index) {
  if (preds.size() != scan.size()) {
    throw DimensionMismatch("scan " + std::to_string(scan_index) + ": " +
                            std::to_string(preds.size()) + " predictions for " +
                            std::to_string(scan.size()) + " points");
  }
  const auto n_classes = static_cast<std::size_t>(scan.n_classes);
  ScanPartial out;
  out.bins = make_bins(m_bins);
  out.depth.resize(kDepthBins);
  out.tp.assign(n_classes, 0);
  out.fp.assign(n_classes, 0);
  out.fn.assign(n_classes, 0);

  std::uint64_t n_valid = 0;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    if (!scan.is_valid(i)) continue;
    ++n_valid;
    const int label = scan.labels[i];
    const int pred = preds.classes[i];
    const double conf = preds.confidences[i];
    const bool correct = pred == label;
    accumulate(out.bins, conf, correct);

    auto& row = out.depth[static_cast<std::size_t>(depth_bin_index(depth(scan.points[i])))];
    ++row.count;
    row.sum_conf += conf;
    row.sum_correct += correct;

    if (correct) {
      ++out.tp[static_cast<std::size_t>(label)];
    } else {
      ++out.fn[static_cast<std::size_t>(label)];
      if (pred >= 0 && static_cast<std::size_t>(pred) < n_classes) {
        ++out.fp[static_cast<std::size_t>(pred)];
      }
    }
  }
  if (n_valid == 0) {
    throw EmptyScan("scan " + std::to_string(scan_index) +
                    " has no valid (non-ignored) points");
  }
  out.ece = ece_from_bins(out.bins);
  return out;
}

}  // namespace

void BinStats::merge(const BinStats& other) {
  count += other.count;
  sum_conf += other.sum_conf;
  sum_correct += other.sum_correct;
}

std::vector<BinStats> make_bins(int m_bins) {
  check_bins(m_bins);
  std::vector<BinStats> bins(static_cast<std::size_t>(m_bins));
  for (int m = 0; m < m_bins; ++m) {
    bins[static_cast<std::size_t>(m)].lower = bin_bound(m, m_bins);
    bins[static_cast<std::size_t>(m)].upper = bin_bound(m + 1, m_bins);
  }
  return bins;
}

int bin_index(double conf, int m_bins) {
  if (!(conf > 0.0) || conf > 1.0) return -1;
  int m = static_cast<int>(std::ceil(conf * m_bins)) - 1;
  m = std::clamp(m, 0, m_bins - 1);
  // ceil() can land one bin off when conf * m_bins rounds across an integer;
  // settle against the exact bounds.
  while (m > 0 && !(conf > bin_bound(m, m_bins))) --m;
  while (m < m_bins - 1 && conf > bin_bound(m + 1, m_bins)) ++m;
  return m;
}

void accumulate(std::vector<BinStats>& bins, double conf, bool correct) {
  const int m = bin_index(conf, static_cast<int>(bins.size()));
  if (m < 0) return;
  auto& bin = bins[static_cast<std::size_t>(m)];
  ++bin.count;
  bin.sum_conf += conf;
  bin.sum_correct += correct;
}

double ece_from_bins(std::span<const BinStats> bins) {
  std::uint64_t total = 0;
  for (const auto& bin : bins) total += bin.count;
  if (total == 0) return 0.0;
  double ece = 0.0;
  for (const auto& bin : bins) {
    if (bin.count == 0) continue;
    const double weight = static_cast<double>(bin.count) / static_cast<double>(total);
    ece += weight * std::abs(bin.mean_acc() - bin.mean_conf());
  }
  return ece;
}

double ece_scan(std::span<const double> confidences,
                std::span<const std::uint8_t> correct, int m_bins) {
  check_bins(m_bins);
  if (confidences.size() != correct.size()) {
    throw DimensionMismatch("confidence and correctness arrays differ in length");
  }
  if (confidences.empty()) throw EmptyScan("ece_scan on an empty scan");
  auto bins = make_bins(m_bins);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    accumulate(bins, confidences[i], correct[i] != 0);
  }
  const double n = static_cast<double>(confidences.size());
  double ece = 0.0;
  for (const auto& bin : bins) {
    if (bin.count == 0) continue;
    ece += (static_cast<double>(bin.count) / n) * std::abs(bin.mean_acc() - bin.mean_conf());
  }
  return ece;
}

int depth_bin_index(double d) {
  if (!(d > 0.0)) return 0;
  const double idx = std::floor(d / kDepthBinWidth);
  return idx >= kDepthBins - 1 ? kDepthBins - 1 : static_cast<int>(idx);
}

EvalReport evaluate(const Dataset& data, int m_bins, const PredictionSource& source,
                    unsigned threads) {
  check_bins(m_bins);
  if (data.scans.empty()) throw EmptyScan("dataset has no scans");
  std::vector<ScanPartial> partials(data.scans.size());
  parallel_for(data.scans.size(), threads, [&](std::size_t i) {
    const auto preds = source ? source(i) : uncalibrated_predictions(data.scans[i]);
    partials[i] = summarize_scan(data.scans[i], preds, m_bins, i);
  });

  EvalReport report;
  report.m_bins = m_bins;
  report.n_classes = data.n_classes;
  report.reliability = make_bins(m_bins);
  report.depth_profile.resize(kDepthBins);
  for (int b = 0; b < kDepthBins; ++b) {
    report.depth_profile[static_cast<std::size_t>(b)].d_lower = b * kDepthBinWidth;
    report.depth_profile[static_cast<std::size_t>(b)].d_upper = (b + 1) * kDepthBinWidth;
  }
  const auto n_classes = static_cast<std::size_t>(data.n_classes);
  std::vector<std::uint64_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);

  double ece_total = 0.0;
  for (const auto& part : partials) {
    report.per_scan_ece.push_back(part.ece);
    ece_total += part.ece;
    for (std::size_t m = 0; m < part.bins.size(); ++m) {
      report.reliability[m].merge(part.bins[m]);
    }
    for (std::size_t b = 0; b < part.depth.size(); ++b) {
      auto& row = report.depth_profile[b];
      row.count += part.depth[b].count;
      row.sum_conf += part.depth[b].sum_conf;
      row.sum_correct += part.depth[b].sum_correct;
    }
    for (std::size_t s = 0; s < n_classes && s < part.tp.size(); ++s) {
      tp[s] += part.tp[s];
      fp[s] += part.fp[s];
      fn[s] += part.fn[s];
    }
  }
  report.dataset_ece = ece_total / static_cast<double>(partials.size());
  report.pooled_ece = ece_from_bins(report.reliability);
  for (const auto& bin : report.reliability) report.n_valid_points += bin.count;

  report.iou.per_class.resize(n_classes);
  double iou_total = 0.0;
  int present = 0;
  for (std::size_t s = 0; s < n_classes; ++s) {
    const std::uint64_t denom = tp[s] + fp[s] + fn[s];
    if (denom == 0) continue;
    const double value = static_cast<double>(tp[s]) / static_cast<double>(denom);
    report.iou.per_class[s] = value;
    iou_total += value;
    ++present;
  }
  report.iou.miou = present ? iou_total / present : 0.0;
  return report;
}

EceResult ece_dataset(const Dataset& data, int m_bins) {
  const auto report = evaluate(data, m_bins);
  return {report.dataset_ece, report.per_scan_ece};
}

std::vector<BinStats> reliability_bins(const Dataset& data, int m_bins) {
  return evaluate(data, m_bins).reliability;
}

std::vector<DepthBinRow> depth_profile(const Dataset& data) {
  return evaluate(data).depth_profile;
}

IouResult iou(const Dataset& data) { return evaluate(data).iou; }

}  // namespace pcal
