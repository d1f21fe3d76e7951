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

#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"
#include "pcal/calibrators.hpp"
#include "pcal/errors.hpp"
#include "pcal/io.hpp"
#include "pcal/metrics.hpp"
#include "pcal/optim.hpp"
#include "pcal/parallel.hpp"
#include "pcal/synth.hpp"

namespace pcal::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct GlobalOptions {
  std::uint64_t seed = 0;
  unsigned threads = default_thread_count();
  bool verbose = false;
};

struct SynthOptions {
  std::string preset = "calibrated";
  int scans = 10;
  int points = 1024;
  int classes = 8;
  double alpha = 1.0;
  double radius = 50.0;
  double tau = 2.5;
  double k1 = 0.05;
  double k2 = 1.0;
  std::string out;
};

struct FitOptions {
  std::string method;
  std::string data;
  std::string split = "fit";
  int epochs = 20;
  double lr = 1e-3;
  double wd = 1e-6;
  int batch_scans = 8;
  std::string entropy = "shannon";
  std::optional<double> eta;
  std::string eta_estimator = "midpoint";
  bool balanced_sampling = false;
  std::string out;
};

struct ApplyOptions {
  std::string params;
  std::string data;
  std::string split = "eval";
  std::string out;
};

struct EvalOptions {
  std::string data;
  std::string split = "eval";
  std::string params;
  std::string sidecars;
  int bins = kDefaultBins;
  std::string report;
  std::string reliability_csv;
  std::string reliability_svg;
  bool depth_profile = false;
};

class Log {
 public:
  Log(std::ostream& err, bool enabled) : err_(err), enabled_(enabled) {}
  template <typename... Args>
  void operator()(const Args&... args) const {
    if (!enabled_) return;
    (err_ << ... << args) << '\n';
  }

 private:
  std::ostream& err_;
  bool enabled_;
};

std::string scan_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scan_%05zu.c3ds", i);
  return buf;
}

fs::path sidecar_name(const std::string& scan_name) {
  return fs::path(scan_name).filename().replace_extension(".c3dp");
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : std::string()));
  }
}

void check_class_count(const Calibrator& c, const Dataset& data) {
  if (c.n_classes != data.n_classes) {
    throw ValidationError("params were fit for " + std::to_string(c.n_classes) +
                          " classes but the dataset has " + std::to_string(data.n_classes));
  }
}

void check_nonempty_scans(const io::LoadedDataset& loaded) {
  for (std::size_t i = 0; i < loaded.data.scans.size(); ++i) {
    if (loaded.data.scans[i].valid_count() == 0) {
      throw EmptyScan("scan " + loaded.scan_names[i] + " has no valid (non-ignored) points");
    }
  }
}

// Calibrated predictions of every scan, with errors naming the scan file.
PredictionSource calibrated_source(const Calibrator& c, const io::LoadedDataset& loaded,
                                   std::uint64_t seed) {
  return [&c, &loaded, seed](std::size_t i) {
    try {
      return apply_to_scan(c.params, loaded.data.scans[i], i, seed);
    } catch (const NonPositiveAlpha& e) {
      throw NonPositiveAlpha(loaded.scan_names[i] + ": " + e.what());
    }
  };
}

int cmd_synth(const SynthOptions& o, const GlobalOptions& g, std::ostream& out, const Log& log) {
  if (o.preset != "calibrated" && o.preset != "temp-distort" && o.preset != "depth-distort") {
    throw ValidationError("unknown preset '" + o.preset +
                          "' (expected calibrated, temp-distort or depth-distort)");
  }
  if (o.preset == "temp-distort" && !(o.tau > 0.0)) {
    throw ValidationError("--tau must satisfy tau > 0, got " + std::to_string(o.tau));
  }
  SynthConfig config;
  config.n_scans = o.scans;
  config.points_per_scan = o.points;
  config.n_classes = o.classes;
  config.scene_radius = o.radius;
  config.seed = g.seed;
  config.dirichlet_alpha = o.alpha;
  config.validate();

  const fs::path dir(o.out);
  ensure_directory(dir);
  log("generating ", o.scans, " scans x ", o.points, " points, preset ", o.preset);
  Dataset data = gen_calibrated(config, g.threads);
  if (o.preset == "temp-distort") data = distort_temperature(data, o.tau);
  if (o.preset == "depth-distort") data = distort_depth(data, o.k1, o.k2);

  io::Manifest manifest;
  manifest.n_classes = o.classes;
  for (int s = 0; s < o.classes; ++s) manifest.class_names.push_back("class_" + std::to_string(s));
  for (std::size_t i = 0; i < data.scans.size(); ++i) {
    manifest.scans.push_back(scan_file_name(i));
  }
  parallel_for(data.scans.size(), g.threads, [&](std::size_t i) {
    io::write_scan(data.scans[i], dir / manifest.scans[i]);
  });

  std::vector<std::size_t> order(data.scans.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(g.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_fit = order.size() < 2 ? order.size() : (order.size() * 4) / 5;
  std::vector<std::size_t> fit(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_fit));
  std::vector<std::size_t> eval(order.begin() + static_cast<std::ptrdiff_t>(n_fit), order.end());
  std::sort(fit.begin(), fit.end());
  std::sort(eval.begin(), eval.end());
  for (auto i : fit) manifest.fit.push_back(manifest.scans[i]);
  for (auto i : eval) manifest.eval.push_back(manifest.scans[i]);
  io::write_manifest(manifest, dir / "manifest.json");

  Json summary;
  summary["manifest"] = (dir / "manifest.json").string();
  summary["preset"] = o.preset;
  summary["scans"] = data.scans.size();
  summary["fit"] = manifest.fit.size();
  summary["eval"] = manifest.eval.size();
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_fit(const FitOptions& o, const GlobalOptions& g, std::ostream& out, const Log& log) {
  const Method method = method_from_string(o.method);
  FitConfig config;
  config.epochs = o.epochs;
  config.lr = o.lr;
  config.weight_decay = o.wd;
  config.batch_scans = o.batch_scans;
  config.seed = g.seed;
  config.entropy_kind = entropy_kind_from_string(o.entropy);
  config.eta = o.eta;
  config.balanced_sampling = o.balanced_sampling;
  if (o.eta_estimator == "midpoint") {
    config.eta_estimator = EtaEstimator::kMidpoint;
  } else if (o.eta_estimator == "histogram") {
    config.eta_estimator = EtaEstimator::kHistogram;
  } else {
    throw ValidationError("unknown --eta-estimator '" + o.eta_estimator + "'");
  }
  config.validate();

  const auto split = io::split_from_string(o.split);
  if (split == io::Split::kEval) throw ValidationError("fit --split must be fit or all");
  const auto loaded = io::load_dataset(o.data, split);
  log("fitting ", o.method, " on ", loaded.data.scans.size(), " scans");

  Calibrator fitted;
  try {
    fitted = fit(method, loaded.data, config);
  } catch (const DegenerateSplit& e) {
    throw DegenerateSplit(std::string(e.what()) +
                          "; pass --eta manually to set the entropy threshold");
  }
  io::write_params(fitted, o.out);

  const auto& meta = *fitted.meta;
  log("initial NLL ", meta.initial_nll, ", final NLL ", meta.final_nll);
  Json summary;
  summary["method"] = o.method;
  summary["params"] = o.out;
  summary["initial_nll"] = meta.initial_nll;
  summary["final_nll"] = meta.final_nll;
  if (meta.eta) summary["eta"] = *meta.eta;
  summary["steps"] = meta.steps;
  summary["reverted"] = meta.reverted;
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_apply(const ApplyOptions& o, const GlobalOptions& g, std::ostream& out, const Log& log) {
  const Calibrator calibrator = io::read_params(o.params);
  const auto split = io::split_from_string(o.split);
  if (split == io::Split::kFit) throw ValidationError("apply --split must be eval or all");
  const auto loaded = io::load_dataset(o.data, split);
  check_class_count(calibrator, loaded.data);

  const fs::path dir(o.out);
  ensure_directory(dir);
  const auto source = calibrated_source(calibrator, loaded, g.seed);
  std::vector<ScanPredictions> preds(loaded.data.scans.size());
  parallel_for(preds.size(), g.threads, [&](std::size_t i) { preds[i] = source(i); });
  for (std::size_t i = 0; i < preds.size(); ++i) {
    io::write_sidecar(preds[i], dir / sidecar_name(loaded.scan_names[i]));
  }
  log("wrote ", preds.size(), " sidecars to ", dir.string());

  Json summary;
  summary["method"] = std::string(to_string(method_of(calibrator.params)));
  summary["sidecars"] = preds.size();
  summary["out"] = dir.string();
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_eval(const EvalOptions& o, const GlobalOptions& g, std::ostream& out, const Log& log) {
  if (!o.params.empty() && !o.sidecars.empty()) {
    throw ValidationError("--params and --sidecars are mutually exclusive");
  }
  const auto split = io::split_from_string(o.split);
  if (split == io::Split::kFit) throw ValidationError("eval --split must be eval or all");
  const auto loaded = io::load_dataset(o.data, split);
  check_nonempty_scans(loaded);

  io::ReportOptions options;
  options.include_depth_profile = o.depth_profile;
  options.class_names = io::read_manifest(o.data).class_names;

  std::optional<Calibrator> calibrator;
  PredictionSource source;
  if (!o.params.empty()) {
    calibrator = io::read_params(o.params);
    check_class_count(*calibrator, loaded.data);
    options.method = method_of(calibrator->params);
    source = calibrated_source(*calibrator, loaded, g.seed);
  } else if (!o.sidecars.empty()) {
    const fs::path dir(o.sidecars);
    source = [&loaded, dir](std::size_t i) {
      auto preds = io::read_sidecar(dir / sidecar_name(loaded.scan_names[i]));
      if (preds.size() != loaded.data.scans[i].size()) {
        throw ValidationError("sidecar for " + loaded.scan_names[i] + " has " +
                              std::to_string(preds.size()) + " points, scan has " +
                              std::to_string(loaded.data.scans[i].size()));
      }
      return preds;
    };
  }

  log("evaluating ", loaded.data.scans.size(), " scans with ", o.bins, " bins");
  const EvalReport report = evaluate(loaded.data, o.bins, source, g.threads);
  if (!o.report.empty()) io::write_report(report, o.report, options);
  if (!o.reliability_csv.empty()) io::write_reliability_csv(report.reliability, o.reliability_csv);
  if (!o.reliability_svg.empty()) io::write_reliability_svg(report.reliability, o.reliability_svg);

  Json summary;
  summary["method"] = options.method ? std::string(to_string(*options.method)) : "uncal";
  summary["dataset_ece"] = report.dataset_ece;
  summary["ece_pct"] = io::format_percent(report.dataset_ece);
  summary["miou"] = report.iou.miou;
  summary["n_scans"] = report.per_scan_ece.size();
  out << summary.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Post-hoc confidence calibration for point-cloud segmentation", "pcal"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads for per-scan work")
      ->check(CLI::PositiveNumber);
  app.add_flag("--verbose,-v", g.verbose, "Log progress to stderr");

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Generate synthetic scans with known calibration");
  synth->add_option("--preset", so.preset, "calibrated | temp-distort | depth-distort");
  synth->add_option("--scans", so.scans, "Number of scans");
  synth->add_option("--points", so.points, "Points per scan");
  synth->add_option("--classes", so.classes, "Number of classes");
  synth->add_option("--alpha", so.alpha, "Symmetric Dirichlet concentration");
  synth->add_option("--radius", so.radius, "Scene radius in meters");
  synth->add_option("--tau", so.tau, "Temperature distortion (temp-distort)");
  synth->add_option("--k1", so.k1, "Depth slope of the distortion (depth-distort)");
  synth->add_option("--k2", so.k2, "Depth intercept of the distortion (depth-distort)");
  synth->add_option("--out", so.out, "Output directory")->required();

  FitOptions fo;
  auto* fitc = app.add_subcommand("fit", "Fit a calibrator on a manifest split");
  fitc->add_option("--method", fo.method, "temps | logis | diris | metac | depts")->required();
  fitc->add_option("--data", fo.data, "Manifest JSON")->required();
  fitc->add_option("--split", fo.split, "fit | all");
  fitc->add_option("--epochs", fo.epochs, "Training epochs");
  fitc->add_option("--lr", fo.lr, "AdamW learning rate");
  fitc->add_option("--wd", fo.wd, "AdamW weight decay");
  fitc->add_option("--batch-scans", fo.batch_scans, "Scans per batch");
  fitc->add_option("--entropy", fo.entropy, "shannon | conf");
  fitc->add_option("--eta", fo.eta, "Fixed entropy threshold in nats (metac/depts)");
  fitc->add_option("--eta-estimator", fo.eta_estimator, "midpoint | histogram");
  fitc->add_flag("--balanced-sampling", fo.balanced_sampling,
                 "Subsample correct points per batch when fitting depts");
  fitc->add_option("--out", fo.out, "Output params JSON")->required();

  ApplyOptions ao;
  auto* apply = app.add_subcommand("apply", "Write calibrated per-point confidence sidecars");
  apply->add_option("--params", ao.params, "Params JSON")->required();
  apply->add_option("--data", ao.data, "Manifest JSON")->required();
  apply->add_option("--split", ao.split, "eval | all");
  apply->add_option("--out", ao.out, "Output directory")->required();

  EvalOptions eo;
  auto* evalc = app.add_subcommand("eval", "Compute ECE, reliability bins and mIoU");
  evalc->add_option("--data", eo.data, "Manifest JSON")->required();
  evalc->add_option("--split", eo.split, "eval | all");
  evalc->add_option("--params", eo.params, "Params JSON; calibrate on the fly");
  evalc->add_option("--sidecars", eo.sidecars, "Directory of prediction sidecars");
  evalc->add_option("--bins", eo.bins, "Confidence bins")->check(CLI::PositiveNumber);
  evalc->add_option("--report", eo.report, "Output report JSON");
  evalc->add_option("--reliability-csv", eo.reliability_csv, "Output reliability CSV");
  evalc->add_option("--reliability-svg", eo.reliability_svg, "Output reliability SVG");
  evalc->add_flag("--depth-profile", eo.depth_profile, "Include the depth profile in the report");

  std::vector<std::string> argv_storage{"pcal"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "pcal: " << e.what() << '\n';
    return kExitValidation;
  }

  const Log log(err, g.verbose);
  try {
    if (synth->parsed()) return cmd_synth(so, g, out, log);
    if (fitc->parsed()) return cmd_fit(fo, g, out, log);
    if (apply->parsed()) return cmd_apply(ao, g, out, log);
    if (evalc->parsed()) return cmd_eval(eo, g, out, log);
  } catch (const IoError& e) {
    err << "pcal: I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "pcal: " << e.what() << '\n';
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "pcal: I/O error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitValidation;
}

}  // namespace pcal::cli
