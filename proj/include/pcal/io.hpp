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

#ifndef PCAL_IO_HPP
#define PCAL_IO_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcal/calibrators.hpp"
#include "pcal/dataset.hpp"
#include "pcal/metrics.hpp"

namespace pcal::io {

// Scan file layout (little-endian):
//   header: "C3DS" | version u16 = 1 | n_points u32 | n_classes u16 | flags u16 | 2 zero bytes
//   point:  x f32 | y f32 | z f32 | label u16 | n_classes x f32 logits
inline constexpr std::size_t kScanHeaderBytes = 16;
inline constexpr std::uint16_t kScanVersion = 1;

std::uint64_t scan_file_size(std::uint64_t n_points, std::uint64_t n_classes);

// Coordinates and logits are rounded to f32.
std::vector<std::uint8_t> encode_scan(const ScanRecord& scan);
// `name` only labels error messages.
ScanRecord decode_scan(std::span<const std::uint8_t> bytes, const std::string& name = "<memory>");

void write_scan(const ScanRecord& scan, const std::filesystem::path& path);
ScanRecord read_scan(const std::filesystem::path& path);

struct Manifest {
  int version = 1;
  int n_classes = 0;
  std::vector<std::string> class_names;
  int ignore_label = kIgnoreLabel;
  std::vector<std::string> scans;  // paths relative to the manifest
  std::vector<std::string> fit;
  std::vector<std::string> eval;
};

enum class Split { kAll, kFit, kEval };
Split split_from_string(const std::string& name);

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct LoadedDataset {
  Dataset data;
  std::vector<std::string> scan_names;  // manifest entries, in load order
};

// Loads the scans of `split` from a manifest; every scan must agree on the
// class count. Throws ValidationError for an empty split.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path, Split split);

std::string calibrator_to_json(const Calibrator& calibrator);
Calibrator calibrator_from_json(const std::string& text);
void write_params(const Calibrator& calibrator, const std::filesystem::path& path);
Calibrator read_params(const std::filesystem::path& path);

// "2.45%" style, two decimals.
std::string format_percent(double fraction);

struct ReportOptions {
  bool include_depth_profile = true;
  std::vector<std::string> class_names;
  std::optional<Method> method;
};

std::string report_to_json(const EvalReport& report, const ReportOptions& options = {});
void write_report(const EvalReport& report, const std::filesystem::path& path,
                  const ReportOptions& options = {});

std::string reliability_csv(std::span<const BinStats> bins);
void write_reliability_csv(std::span<const BinStats> bins, const std::filesystem::path& path);
std::string reliability_svg(std::span<const BinStats> bins);
void write_reliability_svg(std::span<const BinStats> bins, const std::filesystem::path& path);

// Sidecar of calibrated predictions, one entry per input point:
//   "C3DP" | version u16 = 1 | flags u16 | n_points u32 | per point: class u16, conf f64
void write_sidecar(const ScanPredictions& preds, const std::filesystem::path& path);
ScanPredictions read_sidecar(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace pcal::io

#endif  // PCAL_IO_HPP
