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

#include "pcal/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pcal/errors.hpp"
#include "pcal/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace pcal {
namespace {

using Vec = std::vector<double>;
using testing::central_differences;
using testing::random_params;
using testing::reference_nll;
using testing::relative_error;

PointSet random_batch(std::mt19937_64& rng, int n_points, int n_classes) {
  PointSet batch;
  batch.n_classes = n_classes;
  batch.append(testing::random_scan(rng, n_points, n_classes, 1.5));
  return batch;
}

TEST(NllLoss, Examples) {
  EXPECT_EQ(nll_loss(std::vector<ProbVector>{{1.0, 0.0}}, std::vector<int>{0}), 0.0);
  EXPECT_NEAR(nll_loss(std::vector<ProbVector>{{0.5, 0.5}, {0.75, 0.25}}, std::vector<int>{0, 1}),
              (std::log(2.0) + std::log(4.0)) / 2, 1e-15);
  EXPECT_NEAR(nll_loss(std::vector<ProbVector>{{0.2, 0.2, 0.2, 0.2, 0.2}}, std::vector<int>{3}),
              std::log(5.0), 1e-15);
  EXPECT_NEAR(nll_loss(std::vector<ProbVector>{{1.0, 0.0}}, std::vector<int>{1}),
              -std::log(kProbFloor), 1e-12);
  EXPECT_THROW(nll_loss({}, {}), EmptyBatch);
}

TEST(Gradients, MatchCentralDifferencesForEveryMethod) {
  std::mt19937_64 rng(123);
  for (auto method : {Method::kTempS, Method::kLogiS, Method::kDiriS, Method::kMetaC, Method::kDeptS}) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int n_classes = 2 + static_cast<int>(rng() % 5);
      const auto batch = random_batch(rng, 24, n_classes);
      const auto params = random_params(method, n_classes, rng);
      const auto analytic = nll_and_gradient(params, batch);
      EXPECT_NEAR(analytic.loss, reference_nll(params, batch), 1e-12);
      const auto numeric = central_differences(params, batch);
      for (std::size_t k = 0; k < numeric.size(); ++k) {
        worst = std::max(worst, relative_error(analytic.gradient[k], numeric[k]));
      }
    }
    EXPECT_LT(worst, 1e-4) << to_string(method);
  }
}

TEST(Gradients, TempSUniformLogitsHaveZeroGradient) {
  PointSet batch;
  batch.n_classes = 3;
  batch.logits = {0.7, 0.7, 0.7, -2.0, -2.0, -2.0};
  batch.labels = {0, 2};
  batch.depths = {1.0, 2.0};
  for (double t : {0.5, 1.0, 4.0}) {
    EXPECT_NEAR(nll_and_gradient(TempSParams{t}, batch).gradient[0], 0.0, 1e-12);
  }
}

TEST(Gradients, TempSTwoClassClosedForm) {
  PointSet batch;
  batch.n_classes = 2;
  batch.logits = {1.0, 0.0};
  batch.labels = {1};
  batch.depths = {1.0};
  const double e = std::exp(1.0);
  // dNLL/dT at T = 1 is -(q0 - 0) * z0 = -e / (1 + e).
  const double expected = -e / (1.0 + e);
  const double grad = nll_and_gradient(TempSParams{1.0}, batch).gradient[0];
  EXPECT_NEAR(grad, expected, 1e-15);
  EXPECT_NEAR(grad, central_differences(TempSParams{1.0}, batch)[0], 1e-6);
}

TEST(Gradients, DeptSInterceptIsChainRuledTempS) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto batch = random_batch(rng, 1, 4);
    DeptSParams d;
    d.t_high = 1.7;
    d.t_low = 0.8;
    d.k1 = 0.03;
    d.k2 = 0.6;
    d.eta = 0.9;
    const auto z = batch.logits_of(0);
    const bool high = shannon_entropy(softmax(z)) > d.eta;
    const double t = high ? d.t_high : d.t_low;
    const double effective = d.alpha(batch.depths[0]) * t;
    const double temps_grad = nll_and_gradient(TempSParams{effective}, batch).gradient[0];
    const auto depts = nll_and_gradient(d, batch);
    EXPECT_NEAR(depts.gradient[3], temps_grad * t, 1e-12);
    EXPECT_NEAR(depts.gradient[3], central_differences(d, batch)[3], 1e-6);
    EXPECT_EQ(depts.gradient[high ? 1 : 0], 0.0);
  }
}

TEST(AdamW, Examples) {
  AdamWState state;
  Vec theta{1.0, -2.0};
  adamw_step(state, theta, Vec{0.0, 0.0}, 1e-3, 0.0);
  EXPECT_EQ(theta, (Vec{1.0, -2.0}));
  EXPECT_EQ(state.step, 1u);

  AdamWState one;
  Vec scalar{1.0};
  adamw_step(one, scalar, Vec{1.0}, 1e-3, 0.0);
  // m_hat = v_hat = 1, update = 1 / (1 + 1e-8).
  EXPECT_NEAR(scalar[0], 1.0 - 1e-3 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(scalar[0], 0.999, 1e-8);

  AdamWState decay;
  Vec w{1.0};
  adamw_step(decay, w, Vec{0.0}, 1e-3, 1e-6);
  EXPECT_NEAR(1.0 - w[0], 1e-9, 1e-15);
}

TEST(AdamW, MultiStepRecurrence) {
  // Hand-unrolled two steps with g = 2 then g = -1.
  AdamWState state;
  Vec theta{0.5};
  adamw_step(state, theta, Vec{2.0}, 0.01, 0.1);
  adamw_step(state, theta, Vec{-1.0}, 0.01, 0.1);
  double th = 0.5, m = 0, v = 0;
  const double g[2] = {2.0, -1.0};
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1 * g[t - 1];
    v = 0.999 * v + 0.001 * g[t - 1] * g[t - 1];
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    th = th - 0.01 * (mh / (std::sqrt(vh) + 1e-8) + 0.1 * th);
  }
  EXPECT_NEAR(theta[0], th, 1e-15);
  EXPECT_GE(state.v[0], 0.0);
}

TEST(Projection, KeepsParametersFeasible) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> wild(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec theta{wild(rng), wild(rng), wild(rng), wild(rng)};
    const double min_depth = std::abs(wild(rng));
    project_feasible(Method::kDeptS, theta, min_depth);
    EXPECT_GE(theta[0], kMinTemperature);
    EXPECT_GE(theta[1], kMinTemperature);
    EXPECT_GE(theta[2], kMinTemperature);
    EXPECT_GE(theta[2] * min_depth + theta[3], kMinTemperature);
    Vec t{wild(rng)};
    project_feasible(Method::kTempS, t, 0.0);
    EXPECT_GE(t[0], kMinTemperature);
  }
}

TEST(EntropyThreshold, MidpointOfClassConditionalMeans) {
  // Two correct points and one incorrect point with known entropies.
  PointSet points;
  points.n_classes = 2;
  points.logits = {3.0, 0.0, 1.0, 0.0, 0.2, 0.0};
  points.labels = {0, 0, 1};
  points.depths = {1, 1, 1};
  const double h0 = shannon_entropy(softmax(Vec{3.0, 0.0}));
  const double h1 = shannon_entropy(softmax(Vec{1.0, 0.0}));
  const double h2 = shannon_entropy(softmax(Vec{0.2, 0.0}));
  EXPECT_NEAR(select_entropy_threshold(points, EntropyKind::kShannon),
              0.5 * ((h0 + h1) / 2 + h2), 1e-15);
}

TEST(EntropyThreshold, DegenerateSplit) {
  PointSet points;
  points.n_classes = 2;
  points.logits = {3.0, 0.0, 1.0, 0.0};
  points.labels = {0, 0};
  points.depths = {1, 1};
  EXPECT_THROW(select_entropy_threshold(points, EntropyKind::kShannon), DegenerateSplit);
}

TEST(EntropyThreshold, LiesBetweenConditionalMeansOnDistortedData) {
  SynthConfig config;
  config.n_scans = 20;
  config.points_per_scan = 500;
  config.n_classes = 6;
  config.seed = 4;
  const auto data = distort_temperature(gen_calibrated(config), 2.0);
  std::vector<std::size_t> all(data.scans.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto points = collect_points(data, all);

  // Independent pass: conditional means straight from the scans.
  double sum_c = 0, sum_w = 0;
  int n_c = 0, n_w = 0;
  for (const auto& scan : data.scans) {
    for (std::size_t i = 0; i < scan.size(); ++i) {
      const auto p = softmax(scan.logits_of(i));
      const double h = shannon_entropy(p);
      if (predict(p).class_id == scan.labels[i]) {
        sum_c += h;
        ++n_c;
      } else {
        sum_w += h;
        ++n_w;
      }
    }
  }
  const double mean_c = sum_c / n_c, mean_w = sum_w / n_w;
  ASSERT_LT(mean_c, mean_w);
  const double eta = select_entropy_threshold(points, EntropyKind::kShannon);
  EXPECT_NEAR(eta, 0.5 * (mean_c + mean_w), 1e-9);
  const double hist = select_entropy_threshold(points, EntropyKind::kShannon, EtaEstimator::kHistogram);
  EXPECT_GT(hist, mean_c);
  EXPECT_LT(hist, mean_w);
}

PointSet sampler_batch(int n_pos, int n_neg) {
  PointSet batch;
  batch.n_classes = 2;
  for (int i = 0; i < n_pos + n_neg; ++i) {
    batch.logits.insert(batch.logits.end(), {1.0, 0.0});
    batch.labels.push_back(i < n_pos ? 0 : 1);
    batch.depths.push_back(static_cast<double>(i));  // tags the point
  }
  return batch;
}

TEST(BalancedSampler, SliceArithmetic) {
  std::mt19937_64 rng(0);
  const auto six = depts_batch_sampler(sampler_batch(6, 2), rng);
  EXPECT_EQ(six.size(), 5u);
  EXPECT_EQ(six.depths[0], 6.0);  // incorrect points first
  EXPECT_EQ(six.depths[1], 7.0);

  const auto three = depts_batch_sampler(sampler_batch(3, 0), rng);
  ASSERT_EQ(three.size(), 1u);
  EXPECT_EQ(three.depths[0], 1.0);  // s is always 1

  EXPECT_THROW(depts_batch_sampler(sampler_batch(2, 5), rng), TooFewPositives);
}

TEST(BalancedSampler, WindowStartRange) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    const int n_pos = 31;
    const auto out = depts_batch_sampler(sampler_batch(n_pos, 4), rng);
    ASSERT_EQ(out.size(), 4u + n_pos / 2);
    const double start = out.depths[4];
    EXPECT_GE(start, 1.0);
    EXPECT_LE(start, n_pos / 3);
    for (std::size_t k = 4; k < out.size(); ++k) EXPECT_EQ(out.depths[k], start + (k - 4));
  }
  std::mt19937_64 a(77), b(77);
  EXPECT_EQ(depts_batch_sampler(sampler_batch(40, 3), a).depths,
            depts_batch_sampler(sampler_batch(40, 3), b).depths);
}

Dataset synth(double tau, int scans, int points, std::uint64_t seed) {
  SynthConfig config;
  config.n_scans = scans;
  config.points_per_scan = points;
  config.n_classes = 8;
  config.seed = seed;
  auto data = gen_calibrated(config);
  return tau == 1.0 ? data : distort_temperature(data, tau);
}

TEST(Fit, TempSRecoversDistortion) {
  const auto data = synth(2.5, 3000, 128, 1);
  const auto fitted = fit(Method::kTempS, data, FitConfig{});
  const double t = std::get<TempSParams>(fitted.params).temperature;
  EXPECT_GE(t, 2.35);
  EXPECT_LE(t, 2.65);
  EXPECT_LT(fitted.meta->final_nll, fitted.meta->initial_nll);
  EXPECT_EQ(fitted.meta->steps, 7500u);
}

TEST(Fit, TempSOnCalibratedDataStaysNearOne) {
  const auto data = synth(1.0, 200, 256, 2);
  const auto fitted = fit(Method::kTempS, data, FitConfig{});
  const double t = std::get<TempSParams>(fitted.params).temperature;
  EXPECT_GE(t, 0.95);
  EXPECT_LE(t, 1.05);
}

TEST(Fit, LogiSInitializationIsNearOptimalOnCalibratedData) {
  const auto data = synth(1.0, 200, 256, 3);
  const auto fitted = fit(Method::kLogiS, data, FitConfig{});
  EXPECT_LT(std::abs(fitted.meta->final_nll - fitted.meta->initial_nll), 1e-3);
}

TEST(Fit, DeterministicAndNeverWorse) {
  const auto data = synth(1.8, 40, 128, 5);
  FitConfig config;
  config.epochs = 3;
  config.seed = 9;
  for (auto method : {Method::kTempS, Method::kLogiS, Method::kDiriS, Method::kMetaC, Method::kDeptS}) {
    const auto a = fit(method, data, config);
    const auto b = fit(method, data, config);
    EXPECT_EQ(pack_params(a.params), pack_params(b.params)) << to_string(method);
    EXPECT_LE(a.meta->final_nll, a.meta->initial_nll) << to_string(method);
    validate_params(a.params, data.n_classes);
  }
}

TEST(Fit, MetaCTemperatureMatchesTempS) {
  const auto data = synth(1.5, 40, 128, 6);
  FitConfig config;
  config.epochs = 4;
  const auto temps = fit(Method::kTempS, data, config);
  const auto metac = fit(Method::kMetaC, data, config);
  EXPECT_EQ(std::get<TempSParams>(temps.params).temperature,
            std::get<MetaCParams>(metac.params).temperature);
  EXPECT_TRUE(metac.meta->eta.has_value());
  EXPECT_EQ(metac.meta->eta_estimator, "midpoint");
}

TEST(Fit, ManualEtaAndDegenerateSplit) {
  Dataset data;
  data.n_classes = 2;
  data.scans.push_back(testing::make_scan(2, {{2, 0}, {3, 0}, {1, 0}}, {0, 0, 0}));
  EXPECT_THROW(fit(Method::kDeptS, data, FitConfig{}), DegenerateSplit);
  FitConfig config;
  config.eta = 0.3;
  config.epochs = 2;
  const auto fitted = fit(Method::kDeptS, data, config);
  EXPECT_EQ(std::get<DeptSParams>(fitted.params).eta, 0.3);
  EXPECT_EQ(fitted.meta->eta_estimator, "manual");
}

TEST(Fit, BalancedSamplingOptionIsDeterministic) {
  const auto data = distort_depth(synth(1.0, 40, 256, 7), 0.05, 1.0);
  FitConfig config;
  config.epochs = 2;
  config.balanced_sampling = true;
  const auto a = fit(Method::kDeptS, data, config);
  const auto b = fit(Method::kDeptS, data, config);
  EXPECT_TRUE(a.meta->balanced_sampling);
  EXPECT_EQ(pack_params(a.params), pack_params(b.params));
}

TEST(Fit, ConfigValidation) {
  FitConfig config;
  config.epochs = 0;
  EXPECT_THROW(config.validate(), ValidationError);
  config = {};
  config.lr = 0.0;
  EXPECT_THROW(config.validate(), ValidationError);
  config = {};
  config.batch_scans = 0;
  EXPECT_THROW(config.validate(), ValidationError);
  const FitConfig defaults;
  EXPECT_EQ(defaults.epochs, 20);
  EXPECT_EQ(defaults.lr, 1e-3);
  EXPECT_EQ(defaults.weight_decay, 1e-6);
  EXPECT_EQ(defaults.batch_scans, 8);
  EXPECT_EQ(defaults.m_bins, 10);
}

TEST(NllGrid, UnimodalWithMinimumNearTau) {
  const auto data = synth(2.5, 100, 512, 8);
  std::vector<std::size_t> all(data.scans.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto points = collect_points(data, all);
  Vec nll;
  for (int k = 5; k <= 50; ++k) nll.push_back(batch_nll(TempSParams{k / 10.0}, points));
  const auto best = static_cast<std::size_t>(std::min_element(nll.begin(), nll.end()) - nll.begin());
  EXPECT_EQ(best, 20u);  // T = 2.5
  for (std::size_t k = 1; k <= best; ++k) EXPECT_LT(nll[k], nll[k - 1]);
  for (std::size_t k = best + 1; k < nll.size(); ++k) EXPECT_GT(nll[k], nll[k - 1]);
}

}  // namespace
}  // namespace pcal
