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

#include "pcal/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pcal/errors.hpp"

namespace pcal::io {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr char kScanMagic[4] = {'C', '3', 'D', 'S'};
constexpr char kSidecarMagic[4] = {'C', '3', 'D', 'P'};
constexpr std::size_t kSidecarHeaderBytes = 12;
constexpr std::size_t kSidecarPointBytes = 10;

class ByteWriter {
 public:
  explicit ByteWriter(std::size_t reserve) { bytes_.reserve(reserve); }
  void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
  void u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::size_t offset() const { return offset_; }
  std::uint16_t u16() {
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[offset_] | (bytes_[offset_ + 1] << 8));
    offset_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[offset_ + k]) << (8 * k);
    offset_ += 4;
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes_[offset_ + k]) << (8 * k);
    offset_ += 8;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  double f64() { return std::bit_cast<double>(u64()); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw IoError("cannot read " + path.string() + ": " + ec.message());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read from " + path.string());
  return bytes;
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw FormatError(what + ": invalid JSON: " + e.what());
  }
}

template <typename T>
T json_get(const Json& j, const char* key, const std::string& what) {
  if (!j.contains(key)) throw FormatError(what + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw FormatError(what + ": field '" + key + "' has the wrong type");
  }
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Thresholds may be +inf ("never trigger"); JSON has no infinity, so it is
// stored as null.
Json eta_json(double eta) { return std::isfinite(eta) ? Json(eta) : Json(nullptr); }
double eta_from_json(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace

std::uint64_t scan_file_size(std::uint64_t n_points, std::uint64_t n_classes) {
  return kScanHeaderBytes + n_points * (14 + 4 * n_classes);
}

std::vector<std::uint8_t> encode_scan(const ScanRecord& scan) {
  scan.validate();
  if (scan.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("scan has too many points for the file format");
  }
  if (scan.n_classes >= 65535) throw ValidationError("too many classes for the file format");
  ByteWriter w(static_cast<std::size_t>(scan_file_size(scan.size(), static_cast<std::uint64_t>(scan.n_classes))));
  w.raw(kScanMagic, 4);
  w.u16(kScanVersion);
  w.u32(static_cast<std::uint32_t>(scan.size()));
  w.u16(static_cast<std::uint16_t>(scan.n_classes));
  w.u16(0);
  w.u16(0);
  for (std::size_t i = 0; i < scan.size(); ++i) {
    w.f32(scan.points[i].x);
    w.f32(scan.points[i].y);
    w.f32(scan.points[i].z);
    w.u16(scan.labels[i]);
    for (double z : scan.logits_of(i)) {
      if (!std::isfinite(static_cast<float>(z))) {
        throw ValidationError("logit at point " + std::to_string(i) + " overflows f32");
      }
      w.f32(z);
    }
  }
  return w.take();
}

ScanRecord decode_scan(std::span<const std::uint8_t> bytes, const std::string& name) {
  if (bytes.size() < kScanHeaderBytes) {
    throw FormatError(name + ": file is " + std::to_string(bytes.size()) +
                      " bytes, shorter than the 16-byte header");
  }
  if (std::memcmp(bytes.data(), kScanMagic, 4) != 0) {
    throw FormatError(name + ": bad magic at offset 0 (expected \"C3DS\")");
  }
  ByteReader r(bytes.subspan(4));
  const auto version = r.u16();
  if (version != kScanVersion) {
    throw FormatError(name + ": unsupported version " + std::to_string(version) + " at offset 4");
  }
  const auto n_points = r.u32();
  const auto n_classes = r.u16();
  r.u16();  // flags
  r.u16();  // padding
  const auto expected = scan_file_size(n_points, n_classes);
  if (bytes.size() != expected) {
    throw FormatError(name + ": expected " + std::to_string(expected) + " bytes for " +
                      std::to_string(n_points) + " points x " + std::to_string(n_classes) +
                      " classes, file has " + std::to_string(bytes.size()));
  }
  if (n_classes < 2) {
    throw ValidationError(name + ": n_classes must be >= 2, header says " + std::to_string(n_classes));
  }

  ScanRecord scan;
  scan.n_classes = n_classes;
  scan.points.resize(n_points);
  scan.labels.resize(n_points);
  scan.logits.resize(static_cast<std::size_t>(n_points) * n_classes);
  ByteReader body(bytes.subspan(kScanHeaderBytes));
  for (std::size_t i = 0; i < n_points; ++i) {
    auto& p = scan.points[i];
    p.x = body.f32();
    p.y = body.f32();
    p.z = body.f32();
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ValidationError(name + ": non-finite coordinate at point " + std::to_string(i));
    }
    const auto label = body.u16();
    if (label != kIgnoreLabel && label >= n_classes) {
      throw ValidationError(name + ": label " + std::to_string(label) + " at point " +
                            std::to_string(i) + " is outside [0, " + std::to_string(n_classes) + ")");
    }
    scan.labels[i] = label;
    for (double& z : scan.logits_of(i)) {
      z = body.f32();
      if (!std::isfinite(z)) {
        throw ValidationError(name + ": non-finite logit at point " + std::to_string(i));
      }
    }
  }
  return scan;
}

void write_scan(const ScanRecord& scan, const fs::path& path) {
  write_bytes(path, encode_scan(scan));
}

ScanRecord read_scan(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return decode_scan(bytes, path.string());
}

Split split_from_string(const std::string& name) {
  if (name == "all") return Split::kAll;
  if (name == "fit") return Split::kFit;
  if (name == "eval") return Split::kEval;
  throw ValidationError("unknown split '" + name + "' (expected all, fit or eval)");
}

Manifest read_manifest(const fs::path& path) {
  const std::string what = path.string();
  const Json j = parse_json(read_text(path), what);
  Manifest m;
  m.version = j.value("version", 1);
  m.n_classes = json_get<int>(j, "n_classes", what);
  m.class_names = j.value("class_names", std::vector<std::string>{});
  m.ignore_label = j.value("ignore_label", static_cast<int>(kIgnoreLabel));
  m.scans = json_get<std::vector<std::string>>(j, "scans", what);
  if (j.contains("split")) {
    const auto& split = j.at("split");
    m.fit = split.value("fit", std::vector<std::string>{});
    m.eval = split.value("eval", std::vector<std::string>{});
  }
  if (m.ignore_label != kIgnoreLabel) {
    throw ValidationError(what + ": ignore_label must be 65535");
  }
  if (m.n_classes < 2) throw ValidationError(what + ": n_classes must be >= 2");
  if (!m.class_names.empty() && m.class_names.size() != static_cast<std::size_t>(m.n_classes)) {
    throw ValidationError(what + ": class_names has " + std::to_string(m.class_names.size()) +
                          " entries for " + std::to_string(m.n_classes) + " classes");
  }
  const std::set<std::string> listed(m.scans.begin(), m.scans.end());
  const std::set<std::string> fit(m.fit.begin(), m.fit.end());
  for (const auto& name : m.fit) {
    if (!listed.count(name)) throw ValidationError(what + ": fit split names unknown scan " + name);
  }
  for (const auto& name : m.eval) {
    if (!listed.count(name)) throw ValidationError(what + ": eval split names unknown scan " + name);
    if (fit.count(name)) throw ValidationError(what + ": scan " + name + " is in both fit and eval");
  }
  return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  Json j;
  j["version"] = m.version;
  j["n_classes"] = m.n_classes;
  j["class_names"] = m.class_names;
  j["ignore_label"] = m.ignore_label;
  j["scans"] = m.scans;
  j["split"] = {{"fit", m.fit}, {"eval", m.eval}};
  write_text(path, j.dump(2) + "\n");
}

LoadedDataset load_dataset(const fs::path& manifest_path, Split split) {
  const Manifest m = read_manifest(manifest_path);
  const auto& names = split == Split::kAll ? m.scans : split == Split::kFit ? m.fit : m.eval;
  if (names.empty()) {
    throw ValidationError(manifest_path.string() + ": the selected split lists no scans");
  }
  LoadedDataset out;
  out.data.n_classes = m.n_classes;
  const fs::path base = manifest_path.parent_path();
  for (const auto& name : names) {
    const fs::path file = base / name;
    if (!fs::exists(file)) throw IoError("scan file " + file.string() + " does not exist");
    auto scan = read_scan(file);
    if (scan.n_classes != m.n_classes) {
      throw ValidationError(file.string() + " has " + std::to_string(scan.n_classes) +
                            " classes, manifest says " + std::to_string(m.n_classes));
    }
    out.data.scans.push_back(std::move(scan));
    out.scan_names.push_back(name);
  }
  return out;
}

std::string calibrator_to_json(const Calibrator& c) {
  Json j;
  j["version"] = 1;
  j["method"] = std::string(to_string(method_of(c.params)));
  EntropyKind kind = EntropyKind::kShannon;
  Json params;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TempSParams>) {
          params["T"] = p.temperature;
        } else if constexpr (std::is_same_v<P, LogiSParams> || std::is_same_v<P, DiriSParams>) {
          params["w"] = p.weights;
          params["b"] = p.bias;
        } else if constexpr (std::is_same_v<P, MetaCParams>) {
          params["T"] = p.temperature;
          params["eta"] = eta_json(p.eta);
          kind = p.entropy_kind;
        } else {
          params["T1"] = p.t_high;
          params["T2"] = p.t_low;
          params["k1"] = p.k1;
          params["k2"] = p.k2;
          params["eta"] = eta_json(p.eta);
          kind = p.entropy_kind;
        }
      },
      c.params);
  j["params"] = params;
  j["entropy_kind"] = std::string(to_string(kind));
  j["s_classes"] = c.n_classes;
  if (c.meta) {
    const auto& m = *c.meta;
    Json meta;
    meta["epochs"] = m.epochs;
    meta["lr"] = m.lr;
    meta["wd"] = m.weight_decay;
    meta["batch_scans"] = m.batch_scans;
    meta["seed"] = m.seed;
    meta["optimizer"] = {{"name", "adamw"}, {"beta1", m.beta1}, {"beta2", m.beta2}, {"eps", m.eps}};
    meta["steps"] = m.steps;
    meta["initial_nll"] = m.initial_nll;
    meta["final_nll"] = m.final_nll;
    meta["final_grad_norm"] = m.final_grad_norm;
    meta["converged"] = m.converged;
    meta["reverted"] = m.reverted;
    meta["balanced_sampling"] = m.balanced_sampling;
    if (m.eta) {
      meta["eta"] = eta_json(*m.eta);
      meta["eta_estimator"] = m.eta_estimator;
    }
    j["fit_meta"] = meta;
  }
  return j.dump(2) + "\n";
}

Calibrator calibrator_from_json(const std::string& text) {
  const std::string what = "params";
  const Json j = parse_json(text, what);
  Calibrator c;
  const Method method = method_from_string(json_get<std::string>(j, "method", what));
  c.n_classes = json_get<int>(j, "s_classes", what);
  const EntropyKind kind = entropy_kind_from_string(j.value("entropy_kind", std::string("shannon")));
  if (!j.contains("params")) throw FormatError("params: missing field 'params'");
  const Json& p = j.at("params");
  switch (method) {
    case Method::kTempS:
      c.params = TempSParams{json_get<double>(p, "T", what)};
      break;
    case Method::kLogiS:
      c.params = LogiSParams{json_get<std::vector<double>>(p, "w", what),
                             json_get<std::vector<double>>(p, "b", what)};
      break;
    case Method::kDiriS:
      c.params = DiriSParams{json_get<std::vector<double>>(p, "w", what),
                             json_get<std::vector<double>>(p, "b", what)};
      break;
    case Method::kMetaC: {
      if (!p.contains("eta")) throw FormatError("params: missing field 'eta'");
      c.params = MetaCParams{json_get<double>(p, "T", what), eta_from_json(p.at("eta")), kind};
      break;
    }
    case Method::kDeptS: {
      if (!p.contains("eta")) throw FormatError("params: missing field 'eta'");
      DeptSParams d;
      d.t_high = json_get<double>(p, "T1", what);
      d.t_low = json_get<double>(p, "T2", what);
      d.k1 = json_get<double>(p, "k1", what);
      d.k2 = json_get<double>(p, "k2", what);
      d.eta = eta_from_json(p.at("eta"));
      d.entropy_kind = kind;
      c.params = d;
      break;
    }
  }
  if (j.contains("fit_meta")) {
    const Json& m = j.at("fit_meta");
    FitMeta meta;
    meta.epochs = m.value("epochs", 0);
    meta.lr = m.value("lr", 0.0);
    meta.weight_decay = m.value("wd", 0.0);
    meta.batch_scans = m.value("batch_scans", 0);
    meta.seed = m.value("seed", std::uint64_t{0});
    if (m.contains("optimizer")) {
      meta.beta1 = m["optimizer"].value("beta1", 0.9);
      meta.beta2 = m["optimizer"].value("beta2", 0.999);
      meta.eps = m["optimizer"].value("eps", 1e-8);
    }
    meta.steps = m.value("steps", std::uint64_t{0});
    meta.initial_nll = m.value("initial_nll", 0.0);
    meta.final_nll = m.value("final_nll", 0.0);
    meta.final_grad_norm = m.value("final_grad_norm", 0.0);
    meta.converged = m.value("converged", false);
    meta.reverted = m.value("reverted", false);
    meta.balanced_sampling = m.value("balanced_sampling", false);
    if (m.contains("eta")) {
      meta.eta = eta_from_json(m.at("eta"));
      meta.eta_estimator = m.value("eta_estimator", std::string());
    }
    c.meta = meta;
  }
  validate_params(c.params, c.n_classes);
  return c;
}

void write_params(const Calibrator& calibrator, const fs::path& path) {
  write_text(path, calibrator_to_json(calibrator));
}

Calibrator read_params(const fs::path& path) { return calibrator_from_json(read_text(path)); }

std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f%%", fraction * 100.0);
  return buf;
}

std::string report_to_json(const EvalReport& report, const ReportOptions& options) {
  Json j;
  j["version"] = 1;
  if (options.method) j["method"] = std::string(to_string(*options.method));
  else j["method"] = "uncal";
  j["m_bins"] = report.m_bins;
  j["n_scans"] = report.per_scan_ece.size();
  j["n_valid_points"] = report.n_valid_points;
  j["dataset_ece"] = report.dataset_ece;
  j["ece_pct"] = format_percent(report.dataset_ece);
  j["pooled_ece"] = report.pooled_ece;
  j["per_scan_ece"] = report.per_scan_ece;
  j["miou"] = report.iou.miou;
  j["miou_pct"] = format_percent(report.iou.miou);
  Json classes = Json::array();
  for (std::size_t s = 0; s < report.iou.per_class.size(); ++s) {
    Json row;
    row["class"] = s;
    if (s < options.class_names.size()) row["name"] = options.class_names[s];
    row["iou"] = report.iou.per_class[s] ? Json(*report.iou.per_class[s]) : Json(nullptr);
    row["present"] = report.iou.per_class[s].has_value();
    classes.push_back(row);
  }
  j["per_class_iou"] = classes;
  Json bins = Json::array();
  for (const auto& b : report.reliability) {
    Json row;
    row["lower"] = b.lower;
    row["upper"] = b.upper;
    row["count"] = b.count;
    row["mean_conf"] = b.count ? Json(b.mean_conf()) : Json(nullptr);
    row["mean_acc"] = b.count ? Json(b.mean_acc()) : Json(nullptr);
    row["gap"] = b.count ? Json(b.gap()) : Json(nullptr);
    bins.push_back(row);
  }
  j["reliability"] = bins;
  if (options.include_depth_profile) {
    Json rows = Json::array();
    for (const auto& r : report.depth_profile) {
      Json row;
      row["d_lower"] = r.d_lower;
      row["d_upper"] = r.d_upper;
      row["count"] = r.count;
      row["mean_conf"] = r.count ? Json(r.mean_conf()) : Json(nullptr);
      row["mean_acc"] = r.count ? Json(r.mean_acc()) : Json(nullptr);
      rows.push_back(row);
    }
    j["depth_profile"] = rows;
  }
  return j.dump(2) + "\n";
}

void write_report(const EvalReport& report, const fs::path& path, const ReportOptions& options) {
  write_text(path, report_to_json(report, options));
}

std::string reliability_csv(std::span<const BinStats> bins) {
  std::string out = "bin_lower,bin_upper,count,mean_conf,mean_acc,gap\r\n";
  for (const auto& b : bins) {
    out += shortest(b.lower) + "," + shortest(b.upper) + "," + std::to_string(b.count) + ",";
    if (b.count) {
      out += shortest(b.mean_conf()) + "," + shortest(b.mean_acc()) + "," + shortest(b.gap());
    } else {
      out += ",,";
    }
    out += "\r\n";
  }
  return out;
}

void write_reliability_csv(std::span<const BinStats> bins, const fs::path& path) {
  write_text(path, reliability_csv(bins));
}

std::string reliability_svg(std::span<const BinStats> bins) {
  constexpr double kSize = 400.0;
  constexpr double kMargin = 50.0;
  const double plot = kSize - 2 * kMargin;
  auto px = [&](double v) { return kMargin + v * plot; };
  auto py = [&](double v) { return kSize - kMargin - v * plot; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" viewBox=\"0 0 " << kSize << " " << kSize << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  for (const auto& b : bins) {
    const double x = px(b.lower);
    const double w = px(b.upper) - x;
    if (b.count == 0) continue;
    const double acc = b.mean_acc();
    const double conf = b.mean_conf();
    svg << "<rect class=\"accuracy\" x=\"" << num(x) << "\" y=\"" << num(py(acc)) << "\" width=\""
        << num(w) << "\" height=\"" << num(py(0) - py(acc))
        << "\" fill=\"#3b6fb6\" stroke=\"black\"/>\n";
    const double top = std::max(acc, conf);
    const double bottom = std::min(acc, conf);
    svg << "<rect class=\"gap\" x=\"" << num(x) << "\" y=\"" << num(py(top)) << "\" width=\""
        << num(w) << "\" height=\"" << num(py(bottom) - py(top))
        << "\" fill=\"#e06666\" fill-opacity=\"0.5\" stroke=\"#c00000\"/>\n";
    svg << "<line class=\"confidence\" x1=\"" << num(x) << "\" y1=\"" << num(py(conf)) << "\" x2=\""
        << num(x + w) << "\" y2=\"" << num(py(conf)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  svg << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << plot << "\" height=\""
      << plot << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << kSize / 2 << "\" y=\"" << kSize - 15
      << "\" text-anchor=\"middle\" font-size=\"14\">Confidence</text>\n";
  svg << "<text x=\"15\" y=\"" << kSize / 2 << "\" text-anchor=\"middle\" font-size=\"14\" "
      << "transform=\"rotate(-90 15 " << kSize / 2 << ")\">Accuracy</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    svg << "<text x=\"" << px(v) << "\" y=\"" << py(0) + 16 << "\" text-anchor=\"middle\" "
        << "font-size=\"10\">" << num(v) << "</text>\n";
    svg << "<text x=\"" << kMargin - 6 << "\" y=\"" << py(v) + 3 << "\" text-anchor=\"end\" "
        << "font-size=\"10\">" << num(v) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_reliability_svg(std::span<const BinStats> bins, const fs::path& path) {
  write_text(path, reliability_svg(bins));
}

void write_sidecar(const ScanPredictions& preds, const fs::path& path) {
  ByteWriter w(kSidecarHeaderBytes + preds.size() * kSidecarPointBytes);
  w.raw(kSidecarMagic, 4);
  w.u16(1);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(preds.size()));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    w.u16(static_cast<std::uint16_t>(preds.classes[i]));
    w.f64(preds.confidences[i]);
  }
  write_bytes(path, w.take());
}

ScanPredictions read_sidecar(const fs::path& path) {
  const auto bytes = read_bytes(path);
  const std::string name = path.string();
  if (bytes.size() < kSidecarHeaderBytes || std::memcmp(bytes.data(), kSidecarMagic, 4) != 0) {
    throw FormatError(name + ": not a prediction sidecar (bad magic at offset 0)");
  }
  ByteReader r(std::span<const std::uint8_t>(bytes).subspan(4));
  if (r.u16() != 1) throw FormatError(name + ": unsupported sidecar version at offset 4");
  r.u16();
  const std::uint64_t n = r.u32();
  const std::uint64_t expected = kSidecarHeaderBytes + n * kSidecarPointBytes;
  if (bytes.size() != expected) {
    throw FormatError(name + ": expected " + std::to_string(expected) + " bytes, file has " +
                      std::to_string(bytes.size()));
  }
  ScanPredictions preds;
  preds.classes.resize(n);
  preds.confidences.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    preds.classes[i] = r.u16();
    preds.confidences[i] = r.f64();
  }
  return preds;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write to " + path.string() + " failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace pcal::io
