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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pcal/errors.hpp"

namespace pcal {
namespace {

const double kLogProbFloor = std::log(kProbFloor);

bool is_correct(std::span<const double> logits, int label) {
  return argmax(logits) == label;
}

// Accumulates the per-point terms of the mean NLL and its gradient.
class NllAccumulator {
 public:
  explicit NllAccumulator(std::size_t n_params) : grad_(n_params) {}

  // Adds -log_probs[label]; returns false (and adds the clamped constant)
  // when the point sits in the flat clamped region.
  bool add_loss(double log_prob) {
    if (log_prob < kLogProbFloor) {
      loss_.add(-kLogProbFloor);
      return false;
    }
    loss_.add(-log_prob);
    return true;
  }
  void add_grad(std::size_t k, double value) { grad_[k].add(value); }

  LossAndGradient finish(std::size_t n) const {
    LossAndGradient out;
    const double inv = 1.0 / static_cast<double>(n);
    out.loss = loss_.value() * inv;
    out.gradient.resize(grad_.size());
    for (std::size_t k = 0; k < grad_.size(); ++k) out.gradient[k] = grad_[k].value() * inv;
    return out;
  }

 private:
  CompensatedSum loss_;
  std::vector<CompensatedSum> grad_;
};

// sum_s (q_s - [s == y]) * x_s, with q = exp(log_probs).
double residual_dot(std::span<const double> log_probs, int label, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t s = 0; s < log_probs.size(); ++s) {
    const double r = std::exp(log_probs[s]) - (static_cast<int>(s) == label ? 1.0 : 0.0);
    acc += r * x[s];
  }
  return acc;
}

LossAndGradient temperature_nll(double temperature, const PointSet& batch) {
  const auto n_classes = static_cast<std::size_t>(batch.n_classes);
  NllAccumulator acc(1);
  std::vector<double> log_probs(n_classes);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto z = batch.logits_of(i);
    const int y = batch.labels[i];
    log_softmax_scaled(z, 1.0 / temperature, log_probs);
    if (!acc.add_loss(log_probs[static_cast<std::size_t>(y)])) continue;
    acc.add_grad(0, -residual_dot(log_probs, y, z) / (temperature * temperature));
  }
  return acc.finish(batch.size());
}

// Shared by LogiS (inputs = logits) and DiriS (inputs = clamped log-probs).
template <typename InputFn>
LossAndGradient affine_nll(std::span<const double> weights, std::span<const double> bias,
                           const PointSet& batch, InputFn&& inputs_of) {
  const auto n_classes = static_cast<std::size_t>(batch.n_classes);
  if (weights.size() != n_classes || bias.size() != n_classes) {
    throw DimensionMismatch("parameter length does not match " +
                            std::to_string(n_classes) + " classes");
  }
  NllAccumulator acc(2 * n_classes);
  std::vector<double> inputs(n_classes), scaled(n_classes), log_probs(n_classes);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int y = batch.labels[i];
    inputs_of(batch.logits_of(i), inputs);
    for (std::size_t s = 0; s < n_classes; ++s) scaled[s] = weights[s] * inputs[s] + bias[s];
    log_softmax_scaled(scaled, 1.0, log_probs);
    if (!acc.add_loss(log_probs[static_cast<std::size_t>(y)])) continue;
    for (std::size_t s = 0; s < n_classes; ++s) {
      const double r = std::exp(log_probs[s]) - (static_cast<int>(s) == y ? 1.0 : 0.0);
      acc.add_grad(s, r * inputs[s]);
      acc.add_grad(n_classes + s, r);
    }
  }
  return acc.finish(batch.size());
}

LossAndGradient depts_nll(const DeptSParams& p, const PointSet& batch) {
  const auto n_classes = static_cast<std::size_t>(batch.n_classes);
  NllAccumulator acc(4);
  std::vector<double> probs(n_classes), log_probs(n_classes);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto z = batch.logits_of(i);
    const int y = batch.labels[i];
    const double d = batch.depths[i];
    softmax_scaled(z, 1.0, probs);
    const bool high = entropy(probs, p.entropy_kind) > p.eta;
    const double t = high ? p.t_high : p.t_low;
    const double alpha = p.alpha(d);
    const double scale = alpha * t;
    log_softmax_scaled(z, 1.0 / scale, log_probs);
    if (!acc.add_loss(log_probs[static_cast<std::size_t>(y)])) continue;
    const double d_scale = -residual_dot(log_probs, y, z) / (scale * scale);
    acc.add_grad(high ? 0 : 1, d_scale * alpha);
    acc.add_grad(2, d_scale * t * d);
    acc.add_grad(3, d_scale * t);
  }
  return acc.finish(batch.size());
}

std::vector<double> to_vector(std::span<const double> values) {
  return {values.begin(), values.end()};
}

}  // namespace

void FitConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be >= 0");
  if (batch_scans < 1) throw ValidationError("batch_scans must be >= 1");
  if (m_bins < 1) throw ValidationError("bin count must be >= 1");
  if (eta && !(*eta >= 0.0)) throw ValidationError("eta must be >= 0");
}

void PointSet::append(const ScanRecord& scan) {
  if (n_classes == 0) n_classes = scan.n_classes;
  if (scan.n_classes != n_classes) {
    throw DimensionMismatch("scan has " + std::to_string(scan.n_classes) +
                            " classes, point set has " + std::to_string(n_classes));
  }
  for (std::size_t i = 0; i < scan.size(); ++i) {
    if (!scan.is_valid(i)) continue;
    const auto z = scan.logits_of(i);
    logits.insert(logits.end(), z.begin(), z.end());
    labels.push_back(scan.labels[i]);
    depths.push_back(depth(scan.points[i]));
  }
}

void PointSet::append_point(const PointSet& other, std::size_t i) {
  const auto z = other.logits_of(i);
  logits.insert(logits.end(), z.begin(), z.end());
  labels.push_back(other.labels[i]);
  depths.push_back(other.depths[i]);
}

PointSet collect_points(const Dataset& data, std::span<const std::size_t> scan_indices) {
  PointSet out;
  out.n_classes = data.n_classes;
  for (auto idx : scan_indices) out.append(data.scans.at(idx));
  return out;
}

double nll_loss(std::span<const ProbVector> probs, std::span<const int> labels) {
  if (probs.empty()) throw EmptyBatch("nll_loss on an empty batch");
  if (probs.size() != labels.size()) {
    throw DimensionMismatch("nll_loss: probability and label counts differ");
  }
  CompensatedSum total;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    total.add(-std::log(std::max(probs[i].at(y), kProbFloor)));
  }
  return total.value() / static_cast<double>(probs.size());
}

std::vector<double> pack_params(const CalibratorParams& params) {
  return std::visit(
      [](const auto& p) -> std::vector<double> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TempSParams> || std::is_same_v<P, MetaCParams>) {
          return {p.temperature};
        } else if constexpr (std::is_same_v<P, LogiSParams> || std::is_same_v<P, DiriSParams>) {
          auto theta = p.weights;
          theta.insert(theta.end(), p.bias.begin(), p.bias.end());
          return theta;
        } else {
          return {p.t_high, p.t_low, p.k1, p.k2};
        }
      },
      params);
}

CalibratorParams unpack_params(const CalibratorParams& like, std::span<const double> theta) {
  const auto expected = pack_params(like).size();
  if (theta.size() != expected) {
    throw DimensionMismatch("parameter vector has " + std::to_string(theta.size()) +
                            " entries, expected " + std::to_string(expected));
  }
  return std::visit(
      [&](auto p) -> CalibratorParams {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TempSParams> || std::is_same_v<P, MetaCParams>) {
          p.temperature = theta[0];
        } else if constexpr (std::is_same_v<P, LogiSParams> || std::is_same_v<P, DiriSParams>) {
          const std::size_t s = theta.size() / 2;
          p.weights = to_vector(theta.subspan(0, s));
          p.bias = to_vector(theta.subspan(s, s));
        } else {
          p.t_high = theta[0];
          p.t_low = theta[1];
          p.k1 = theta[2];
          p.k2 = theta[3];
        }
        return p;
      },
      like);
}

LossAndGradient nll_and_gradient(const CalibratorParams& params, const PointSet& batch) {
  if (batch.size() == 0) throw EmptyBatch("gradient of an empty batch");
  switch (method_of(params)) {
    case Method::kTempS:
      return temperature_nll(std::get<TempSParams>(params).temperature, batch);
    case Method::kMetaC:
      return temperature_nll(std::get<MetaCParams>(params).temperature, batch);
    case Method::kLogiS: {
      const auto& p = std::get<LogiSParams>(params);
      return affine_nll(p.weights, p.bias, batch,
                        [](std::span<const double> z, std::span<double> out) {
                          std::copy(z.begin(), z.end(), out.begin());
                        });
    }
    case Method::kDiriS: {
      const auto& p = std::get<DiriSParams>(params);
      return affine_nll(p.weights, p.bias, batch,
                        [](std::span<const double> z, std::span<double> out) {
                          softmax_scaled(z, 1.0, out);
                          for (double& v : out) v = std::log(std::max(v, kProbFloor));
                        });
    }
    case Method::kDeptS:
      return depts_nll(std::get<DeptSParams>(params), batch);
  }
  throw ValidationError("unknown calibration method");
}

double batch_nll(const CalibratorParams& params, const PointSet& batch) {
  return nll_and_gradient(params, batch).loss;
}

void adamw_step(AdamWState& state, std::span<double> theta, std::span<const double> grads,
                double lr, double weight_decay, const Projection& project) {
  if (theta.size() != grads.size()) {
    throw DimensionMismatch("adamw: parameter/gradient size mismatch");
  }
  if (state.m.size() != theta.size()) {
    state.m.assign(theta.size(), 0.0);
    state.v.assign(theta.size(), 0.0);
  }
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, step);
  const double correction2 = 1.0 - std::pow(state.beta2, step);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double g = grads[k];
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[k] / correction1;
    const double v_hat = state.v[k] / correction2;
    theta[k] -= lr * (m_hat / (std::sqrt(v_hat) + state.eps) + weight_decay * theta[k]);
  }
  if (project) project(theta);
}

void project_feasible(Method method, std::span<double> theta, double min_depth) {
  switch (method) {
    case Method::kTempS:
    case Method::kMetaC:
      theta[0] = std::max(theta[0], kMinTemperature);
      break;
    case Method::kDeptS:
      theta[0] = std::max(theta[0], kMinTemperature);
      theta[1] = std::max(theta[1], kMinTemperature);
      theta[2] = std::max(theta[2], kMinTemperature);
      theta[3] = std::max(theta[3], kMinTemperature * (1.0 + 1e-9) - theta[2] * min_depth);
      break;
    case Method::kLogiS:
    case Method::kDiriS:
      break;
  }
}

double select_entropy_threshold(const PointSet& points, EntropyKind kind,
                                EtaEstimator estimator) {
  const auto n_classes = static_cast<std::size_t>(points.n_classes);
  std::vector<double> probs(n_classes);
  std::vector<double> h_correct, h_wrong;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto z = points.logits_of(i);
    softmax_scaled(z, 1.0, probs);
    const double h = entropy(probs, kind);
    (is_correct(z, points.labels[i]) ? h_correct : h_wrong).push_back(h);
  }
  if (h_correct.empty() || h_wrong.empty()) {
    throw DegenerateSplit("entropy threshold needs both correct and incorrect predictions (" +
                          std::to_string(h_correct.size()) + " correct, " +
                          std::to_string(h_wrong.size()) + " incorrect)");
  }
  auto mean = [](const std::vector<double>& v) {
    CompensatedSum s;
    for (double x : v) s.add(x);
    return s.value() / static_cast<double>(v.size());
  };
  const double mean_correct = mean(h_correct);
  const double mean_wrong = mean(h_wrong);
  const double midpoint = 0.5 * (mean_correct + mean_wrong);
  if (estimator == EtaEstimator::kMidpoint) return midpoint;

  // Histogram crossing: walk from the correct-class mean toward the
  // incorrect-class mean and stop at the first bin where the incorrect
  // density catches up with the correct density.
  constexpr int kBins = 64;
  const double h_max = kind == EntropyKind::kShannon ? std::log(static_cast<double>(n_classes))
                                                      : std::exp(-1.0);
  auto density = [&](const std::vector<double>& v) {
    std::vector<double> hist(kBins, 0.0);
    for (double x : v) {
      const int b = std::clamp(static_cast<int>(x / h_max * kBins), 0, kBins - 1);
      hist[static_cast<std::size_t>(b)] += 1.0 / static_cast<double>(v.size());
    }
    return hist;
  };
  const auto dc = density(h_correct);
  const auto dw = density(h_wrong);
  const int from = std::clamp(static_cast<int>(mean_correct / h_max * kBins), 0, kBins - 1);
  const int to = std::clamp(static_cast<int>(mean_wrong / h_max * kBins), 0, kBins - 1);
  const int dir = to >= from ? 1 : -1;
  for (int b = from; b != to + dir; b += dir) {
    const auto ub = static_cast<std::size_t>(b);
    if (dw[ub] >= dc[ub] && dw[ub] > 0.0) return (b + 0.5) * h_max / kBins;
  }
  return midpoint;
}

PointSet depts_batch_sampler(const PointSet& batch, std::mt19937_64& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    (is_correct(batch.logits_of(i), batch.labels[i]) ? pos : neg).push_back(i);
  }
  const std::size_t n_pos = pos.size();
  if (n_pos < 3) {
    throw TooFewPositives("balanced sampling needs >= 3 correct points, batch has " +
                          std::to_string(n_pos));
  }
  std::uniform_int_distribution<std::size_t> pick(1, n_pos / 3);
  const std::size_t start = pick(rng);
  const std::size_t stop = start + n_pos / 2;
  PointSet out;
  out.n_classes = batch.n_classes;
  for (auto i : neg) out.append_point(batch, i);
  for (std::size_t k = start; k < stop; ++k) out.append_point(batch, pos[k]);
  return out;
}

Calibrator fit(Method method, const Dataset& data, std::span<const std::size_t> scan_indices,
               const FitConfig& config) {
  config.validate();
  if (scan_indices.empty()) throw EmptyBatch("fit split has no scans");

  std::vector<PointSet> per_scan;
  PointSet all;
  all.n_classes = data.n_classes;
  for (auto idx : scan_indices) {
    PointSet ps;
    ps.n_classes = data.n_classes;
    ps.append(data.scans.at(idx));
    all.logits.insert(all.logits.end(), ps.logits.begin(), ps.logits.end());
    all.labels.insert(all.labels.end(), ps.labels.begin(), ps.labels.end());
    all.depths.insert(all.depths.end(), ps.depths.begin(), ps.depths.end());
    per_scan.push_back(std::move(ps));
  }
  if (all.size() == 0) throw EmptyBatch("fit split has no valid points");

  FitMeta meta;
  meta.epochs = config.epochs;
  meta.lr = config.lr;
  meta.weight_decay = config.weight_decay;
  meta.batch_scans = config.batch_scans;
  meta.seed = config.seed;
  meta.balanced_sampling = config.balanced_sampling && method == Method::kDeptS;

  CalibratorParams params = initial_params(method, data.n_classes);
  if (method == Method::kMetaC || method == Method::kDeptS) {
    double eta = 0.0;
    if (config.eta) {
      eta = *config.eta;
      meta.eta_estimator = "manual";
    } else {
      eta = select_entropy_threshold(all, config.entropy_kind, config.eta_estimator);
      meta.eta_estimator =
          config.eta_estimator == EtaEstimator::kMidpoint ? "midpoint" : "histogram";
    }
    meta.eta = eta;
    if (auto* p = std::get_if<MetaCParams>(&params)) {
      p->eta = eta;
      p->entropy_kind = config.entropy_kind;
    } else {
      auto& d = std::get<DeptSParams>(params);
      d.eta = eta;
      d.entropy_kind = config.entropy_kind;
    }
  }

  const double min_depth = *std::min_element(all.depths.begin(), all.depths.end());
  const Projection project = [&](std::span<double> theta) {
    project_feasible(method, theta, min_depth);
  };
  std::vector<double> theta = pack_params(params);
  project(theta);
  const CalibratorParams start = unpack_params(params, theta);
  meta.initial_nll = batch_nll(start, all);

  AdamWState state;
  meta.beta1 = state.beta1;
  meta.beta2 = state.beta2;
  meta.eps = state.eps;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(per_scan.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch_scans = static_cast<std::size_t>(config.batch_scans);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t first = 0; first < order.size(); first += batch_scans) {
      PointSet batch;
      batch.n_classes = data.n_classes;
      const std::size_t last = std::min(order.size(), first + batch_scans);
      for (std::size_t k = first; k < last; ++k) {
        const auto& ps = per_scan[order[k]];
        batch.logits.insert(batch.logits.end(), ps.logits.begin(), ps.logits.end());
        batch.labels.insert(batch.labels.end(), ps.labels.begin(), ps.labels.end());
        batch.depths.insert(batch.depths.end(), ps.depths.begin(), ps.depths.end());
      }
      if (meta.balanced_sampling) {
        try {
          batch = depts_batch_sampler(batch, rng);
        } catch (const TooFewPositives&) {
          // Too few correct points to subsample; use the whole batch.
        }
      }
      if (batch.size() == 0) continue;
      const auto current = unpack_params(params, theta);
      const auto lg = nll_and_gradient(current, batch);
      adamw_step(state, theta, lg.gradient, config.lr, config.weight_decay, project);
    }
  }
  meta.steps = state.step;

  const CalibratorParams fitted = unpack_params(params, theta);
  const auto final_eval = nll_and_gradient(fitted, all);
  double grad_norm = 0.0;
  for (double g : final_eval.gradient) grad_norm = std::max(grad_norm, std::abs(g));
  meta.final_grad_norm = grad_norm;
  meta.converged = grad_norm < 1e-3;

  Calibrator out;
  out.n_classes = data.n_classes;
  if (final_eval.loss <= meta.initial_nll) {
    out.params = fitted;
    meta.final_nll = final_eval.loss;
  } else {
    out.params = start;
    meta.final_nll = meta.initial_nll;
    meta.reverted = true;
  }
  out.meta = meta;
  return out;
}

Calibrator fit(Method method, const Dataset& data, const FitConfig& config) {
  std::vector<std::size_t> all(data.scans.size());
  std::iota(all.begin(), all.end(), 0);
  return fit(method, data, all, config);
}

}  // namespace pcal
