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

#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "pcal/calibrators.hpp"
#include "pcal/io.hpp"
#include "pcal/metrics.hpp"
#include "pcal/optim.hpp"
#include "test_util.hpp"

namespace pcal::cli {
namespace {

namespace fs = std::filesystem;
using pcal::testing::TempDir;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::map<std::string, std::string> directory_contents(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files[fs::relative(entry.path(), dir).string()] = io::read_text(entry.path());
  }
  return files;
}

std::string synth(const TempDir& dir, const std::string& name, std::vector<std::string> extra = {},
                  const std::string& seed = "7") {
  std::vector<std::string> args{"--seed", seed, "synth", "--out", (dir / name).string()};
  args.insert(args.end(), extra.begin(), extra.end());
  const auto r = run_cli(args);
  EXPECT_EQ(r.code, kExitOk) << r.err;
  return (dir / name / "manifest.json").string();
}

TEST(Synth, WritesScansAndManifest) {
  TempDir dir;
  const auto manifest_path =
      synth(dir, "d", {"--preset", "calibrated", "--scans", "10", "--points", "1024", "--classes", "4"});
  const auto manifest = io::read_manifest(manifest_path);
  EXPECT_EQ(manifest.scans.size(), 10u);
  EXPECT_EQ(manifest.fit.size(), 8u);
  EXPECT_EQ(manifest.eval.size(), 2u);
  EXPECT_EQ(manifest.n_classes, 4);
  std::size_t scan_files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "d")) {
    if (entry.path().extension() == ".c3ds") {
      ++scan_files;
      EXPECT_EQ(fs::file_size(entry.path()), io::scan_file_size(1024, 4));
    }
  }
  EXPECT_EQ(scan_files, 10u);
}

TEST(Synth, SameSeedIsByteIdentical) {
  TempDir dir;
  const std::vector<std::string> flags{"--preset", "depth-distort", "--scans", "4", "--points", "200"};
  synth(dir, "a", flags);
  synth(dir, "b", flags);
  synth(dir, "c", flags, "8");
  EXPECT_EQ(directory_contents(dir / "a"), directory_contents(dir / "b"));
  EXPECT_NE(directory_contents(dir / "a"), directory_contents(dir / "c"));
}

TEST(Synth, RejectsNonPositiveTau) {
  TempDir dir;
  const auto r = run_cli({"synth", "--preset", "temp-distort", "--tau", "0", "--out", (dir / "d").string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("tau > 0"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"synth", "--preset", "warm", "--out", (dir / "d").string()}).code, kExitValidation);
}

TEST(Usage, ParseErrorsAndHelp) {
  EXPECT_EQ(run_cli({}).code, kExitValidation);
  EXPECT_EQ(run_cli({"frobnicate"}).code, kExitValidation);
  EXPECT_EQ(run_cli({"fit", "--method", "temps"}).code, kExitValidation);
  EXPECT_EQ(run_cli({"--help"}).code, kExitOk);
}

TEST(Fit, DefaultsMatchFitConfig) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--scans", "5", "--points", "100", "--preset", "temp-distort"});
  const auto params_path = (dir / "p.json").string();
  const auto r = run_cli({"fit", "--method", "temps", "--data", manifest, "--out", params_path});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("initial_nll"), std::string::npos);
  const auto params = io::read_params(params_path);
  ASSERT_TRUE(params.meta.has_value());
  const FitConfig defaults;
  EXPECT_EQ(params.meta->epochs, defaults.epochs);
  EXPECT_EQ(params.meta->lr, defaults.lr);
  EXPECT_EQ(params.meta->weight_decay, defaults.weight_decay);
  EXPECT_EQ(params.meta->batch_scans, defaults.batch_scans);
  EXPECT_EQ(params.meta->beta1, 0.9);
  EXPECT_EQ(params.meta->beta2, 0.999);
  EXPECT_EQ(params.meta->eps, 1e-8);
}

TEST(Fit, DeptSOnDepthDistortLearnsPositiveSlope) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--preset", "depth-distort", "--scans", "20", "--points", "512"});
  const auto params_path = (dir / "p.json").string();
  const auto r = run_cli({"fit", "--method", "depts", "--data", manifest, "--out", params_path});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("\"eta\""), std::string::npos) << r.out;
  EXPECT_GT(std::get<DeptSParams>(io::read_params(params_path).params).k1, 0.0);
}

TEST(Fit, MissingManifestIsIoError) {
  TempDir dir;
  const auto r = run_cli({"fit", "--method", "temps", "--data", (dir / "none.json").string(), "--out",
                          (dir / "p.json").string()});
  EXPECT_EQ(r.code, kExitIo);
}

TEST(Fit, DegenerateSplitAsksForEta) {
  TempDir dir;
  io::Manifest m;
  m.n_classes = 2;
  m.scans = {"a.c3ds"};
  m.fit = {"a.c3ds"};
  io::write_manifest(m, dir / "m.json");
  io::write_scan(pcal::testing::make_scan(2, {{2, 0}, {0, 3}}, {0, 1}), dir / "a.c3ds");
  const auto r = run_cli({"fit", "--method", "metac", "--data", (dir / "m.json").string(), "--out",
                          (dir / "p.json").string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("--eta"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"fit", "--method", "metac", "--eta", "0.5", "--data", (dir / "m.json").string(),
                     "--out", (dir / "p.json").string()})
                .code,
            kExitOk);
}

TEST(Apply, UnitTemperatureIsIdentity) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--scans", "5", "--points", "300"});
  io::write_params(Calibrator{TempSParams{1.0}, 8, std::nullopt}, dir / "p.json");
  const auto r = run_cli({"apply", "--params", (dir / "p.json").string(), "--data", manifest, "--out",
                          (dir / "side").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto loaded = io::load_dataset(manifest, io::Split::kEval);
  for (std::size_t s = 0; s < loaded.scan_names.size(); ++s) {
    const auto stem = fs::path(loaded.scan_names[s]).stem().string();
    const auto preds = io::read_sidecar(dir / "side" / (stem + ".c3dp"));
    const auto raw = uncalibrated_predictions(loaded.data.scans[s]);
    EXPECT_EQ(preds.classes, raw.classes);
    for (std::size_t i = 0; i < raw.confidences.size(); ++i) {
      EXPECT_NEAR(preds.confidences[i], raw.confidences[i], 1e-9);
    }
  }
}

TEST(Apply, ClassCountMismatch) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--scans", "5", "--points", "50"});
  io::write_params(Calibrator{TempSParams{1.0}, 3, std::nullopt}, dir / "p.json");
  EXPECT_EQ(run_cli({"apply", "--params", (dir / "p.json").string(), "--data", manifest, "--out",
                     (dir / "side").string()})
                .code,
            kExitValidation);
}

TEST(Apply, DeptSInfeasibleAlphaNamesScanAndPoint) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--scans", "5", "--points", "50"});
  DeptSParams d;
  d.k1 = 0.01;
  d.k2 = -0.5;  // alpha < 0 near the sensor
  d.eta = 1.0;
  io::write_params(Calibrator{d, 8, std::nullopt}, dir / "p.json");
  const auto r = run_cli({"apply", "--params", (dir / "p.json").string(), "--data", manifest, "--split",
                          "all", "--out", (dir / "side").string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("scan"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("point"), std::string::npos) << r.err;
}

TEST(Apply, MetaCIsDeterministic) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--scans", "5", "--points", "400"});
  io::write_params(Calibrator{MetaCParams{1.2, 0.8, EntropyKind::kShannon}, 8, std::nullopt}, dir / "p.json");
  for (const char* out : {"a", "b"}) {
    ASSERT_EQ(run_cli({"--seed", "3", "apply", "--params", (dir / "p.json").string(), "--data", manifest,
                       "--out", (dir / out).string()})
                  .code,
              kExitOk);
  }
  ASSERT_EQ(run_cli({"--seed", "4", "apply", "--params", (dir / "p.json").string(), "--data", manifest,
                     "--out", (dir / "c").string()})
                .code,
            kExitOk);
  EXPECT_EQ(directory_contents(dir / "a"), directory_contents(dir / "b"));
  EXPECT_NE(directory_contents(dir / "a"), directory_contents(dir / "c"));
}

double report_ece(const fs::path& path) {
  const auto text = io::read_text(path);
  const auto key = text.find("\"dataset_ece\"");
  return std::stod(text.substr(text.find(':', key) + 1));
}

TEST(Eval, CalibratedPresetHasLowEce) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--scans", "10", "--points", "32768"});
  const auto r = run_cli({"eval", "--data", manifest, "--report", (dir / "r.json").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_LT(report_ece(dir / "r.json"), 0.01);
  EXPECT_NE(io::read_text(dir / "r.json").find("\"uncal\""), std::string::npos);
}

TEST(Eval, FittedTempSLowersEce) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--preset", "temp-distort", "--scans", "20", "--points", "1024"});
  ASSERT_EQ(run_cli({"fit", "--method", "temps", "--data", manifest, "--out", (dir / "p.json").string()}).code,
            kExitOk);
  ASSERT_EQ(run_cli({"eval", "--data", manifest, "--report", (dir / "u.json").string()}).code, kExitOk);
  ASSERT_EQ(run_cli({"eval", "--data", manifest, "--params", (dir / "p.json").string(), "--report",
                     (dir / "c.json").string()})
                .code,
            kExitOk);
  EXPECT_LT(report_ece(dir / "c.json"), report_ece(dir / "u.json"));
}

TEST(Eval, DefaultBinsAndExports) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--scans", "5", "--points", "500"});
  const auto r = run_cli({"eval", "--data", manifest, "--report", (dir / "r.json").string(),
                          "--reliability-csv", (dir / "r.csv").string(), "--reliability-svg",
                          (dir / "r.svg").string(), "--depth-profile"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto report = io::read_text(dir / "r.json");
  EXPECT_NE(report.find("\"m_bins\": 10"), std::string::npos) << report.substr(0, 200);
  EXPECT_NE(report.find("depth_profile"), std::string::npos);
  const auto loaded = io::load_dataset(manifest, io::Split::kEval);
  EXPECT_EQ(io::read_text(dir / "r.csv"), io::reliability_csv(reliability_bins(loaded.data, 10)));
  EXPECT_TRUE(fs::exists(dir / "r.svg"));
}

TEST(Eval, SidecarsMatchOnTheFly) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--scans", "5", "--points", "500"});
  io::write_params(Calibrator{TempSParams{1.7}, 8, std::nullopt}, dir / "p.json");
  ASSERT_EQ(run_cli({"apply", "--params", (dir / "p.json").string(), "--data", manifest, "--out",
                     (dir / "side").string()})
                .code,
            kExitOk);
  ASSERT_EQ(run_cli({"eval", "--data", manifest, "--params", (dir / "p.json").string(), "--report",
                     (dir / "a.json").string()})
                .code,
            kExitOk);
  ASSERT_EQ(run_cli({"eval", "--data", manifest, "--sidecars", (dir / "side").string(), "--report",
                     (dir / "b.json").string()})
                .code,
            kExitOk);
  EXPECT_EQ(report_ece(dir / "a.json"), report_ece(dir / "b.json"));
}

TEST(Eval, EmptyScanIsValidationError) {
  TempDir dir;
  io::Manifest m;
  m.n_classes = 2;
  m.scans = {"a.c3ds", "empty.c3ds"};
  m.eval = m.scans;
  io::write_manifest(m, dir / "m.json");
  io::write_scan(pcal::testing::make_scan(2, {{2, 0}}, {0}), dir / "a.c3ds");
  io::write_scan(pcal::testing::make_scan(2, {{2, 0}}, {kIgnoreLabel}), dir / "empty.c3ds");
  const auto r = run_cli({"eval", "--data", (dir / "m.json").string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("empty.c3ds"), std::string::npos) << r.err;
}

TEST(Eval, TempSAndDeptSPreserveMiou) {
  TempDir dir;
  const auto manifest = synth(dir, "d", {"--preset", "depth-distort", "--scans", "10", "--points", "400"});
  ASSERT_EQ(run_cli({"eval", "--data", manifest, "--report", (dir / "u.json").string()}).code, kExitOk);
  DeptSParams d;
  d.eta = 1.0;
  io::write_params(Calibrator{TempSParams{2.2}, 8, std::nullopt}, dir / "t.json");
  io::write_params(Calibrator{d, 8, std::nullopt}, dir / "d.json");
  const auto miou_of = [](const fs::path& path) {
    const auto text = io::read_text(path);
    const auto key = text.find("\"miou\"");
    return text.substr(key, text.find(',', key) - key);
  };
  for (const char* params : {"t.json", "d.json"}) {
    ASSERT_EQ(run_cli({"eval", "--data", manifest, "--params", (dir / params).string(), "--report",
                       (dir / "c.json").string()})
                  .code,
              kExitOk);
    EXPECT_EQ(miou_of(dir / "c.json"), miou_of(dir / "u.json")) << params;
  }
}

TEST(EndToEnd, ThreadCountInvariant) {
  TempDir dir;
  std::map<std::string, std::string> first;
  for (const char* threads : {"1", "4"}) {
    const auto root = dir / (std::string("t") + threads);
    const std::string t = threads;
    const auto manifest = (root / "d" / "manifest.json").string();
    ASSERT_EQ(run_cli({"--threads", t, "synth", "--preset", "depth-distort", "--scans", "10", "--points", "300",
                       "--out", (root / "d").string()})
                  .code,
              kExitOk);
    ASSERT_EQ(run_cli({"--threads", t, "fit", "--method", "metac", "--data", manifest, "--epochs", "3", "--out",
                       (root / "p.json").string()})
                  .code,
              kExitOk);
    ASSERT_EQ(run_cli({"--threads", t, "apply", "--params", (root / "p.json").string(), "--data", manifest,
                       "--out", (root / "side").string()})
                  .code,
              kExitOk);
    ASSERT_EQ(run_cli({"--threads", t, "eval", "--data", manifest, "--params", (root / "p.json").string(),
                       "--report", (root / "r.json").string(), "--depth-profile"})
                  .code,
              kExitOk);
    auto contents = directory_contents(root);
    if (first.empty()) {
      first = std::move(contents);
    } else {
      EXPECT_EQ(contents, first);
    }
  }
}

}  // namespace
}  // namespace pcal::cli
