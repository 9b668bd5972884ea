// Copyright 2026 The jna Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// Training protocol: staged learning-rate schedule, strided window
/// extraction, and the two-phase train loop (per-branch pretraining followed
/// by joint training of the configured head). Deterministic given a seed.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "jna/data.hpp"
#include "jna/loss.hpp"
#include "jna/model.hpp"
#include "jna/rng.hpp"

namespace jna {

struct TrainSchedule {
  double base_lr = 1e-3;
  std::vector<std::size_t> milestones;  // iterations at which lr decays
  double decay_factor = 0.1;
  std::size_t max_iters = 0;
  double momentum = 0.9;
  std::size_t batch_size = 8;

  void validate() const {
    if (base_lr <= 0.0) throw ConfigError("TrainSchedule: base_lr must be positive");
    if (decay_factor <= 0.0 || decay_factor >= 1.0)
      throw ConfigError("TrainSchedule: decay_factor must be in (0,1)");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ConfigError("TrainSchedule: momentum must be in [0,1)");
    if (batch_size == 0) throw ConfigError("TrainSchedule: batch_size must be positive");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
      if (i > 0 && milestones[i] <= milestones[i - 1])
        throw ConfigError("TrainSchedule: milestones must be strictly increasing");
      if (milestones[i] >= max_iters)
        throw ConfigError("TrainSchedule: milestones must be below max_iters");
    }
  }

  /// Joint-network schedule at full scale: 1e-3, /10 at 25K/45K/60K, stop 65K.
  static TrainSchedule paper_joint() {
    return {1e-3, {25000, 45000, 60000}, 0.1, 65000, 0.9, 64};
  }

  /// Per-stream CNN schedule at full scale (kept for reference only):
  /// 0.01, /10 at 20K/30K/35K, stop 40K.
  static TrainSchedule paper_cnn() {
    return {0.01, {20000, 30000, 35000}, 0.1, 40000, 0.9, 128};
  }

  /// Desk-scale joint schedule: the full-scale milestones scaled down by 10,
  /// preserving their positions within the run.
  static TrainSchedule desk_default() {
    return {3e-3, {2500, 4500, 6000}, 0.1, 6500, 0.9, 8};
  }

  /// Brief per-branch warm-up. Long pretraining lets the encoders settle on
  /// pure memorization before the gates ever see a gradient; keeping this
  /// phase short lets selection and encoding co-adapt in the joint phase.
  static TrainSchedule desk_pretrain() {
    return {3e-3, {}, 0.1, 250, 0.9, 8};
  }

  nlohmann::json to_json() const {
    return {{"base_lr", base_lr},         {"milestones", milestones},
            {"decay_factor", decay_factor}, {"max_iters", max_iters},
            {"momentum", momentum},       {"batch_size", batch_size}};
  }

  static TrainSchedule from_json(const nlohmann::json& j) {
    TrainSchedule s;
    s.base_lr = j.at("base_lr").get<double>();
    s.milestones = j.at("milestones").get<std::vector<std::size_t>>();
    s.decay_factor = j.at("decay_factor").get<double>();
    s.max_iters = j.at("max_iters").get<std::size_t>();
    s.momentum = j.at("momentum").get<double>();
    s.batch_size = j.at("batch_size").get<std::size_t>();
    s.validate();
    return s;
  }
};

/// base_lr scaled down once per milestone passed. Computed as a division by
/// (1/decay)^k, which keeps the decimal stage values of the full-scale
/// preset bit-exact.
inline double lr_at(const TrainSchedule& s, std::size_t iter) {
  if (iter >= s.max_iters)
    throw std::invalid_argument("lr_at: iteration " + std::to_string(iter) +
                                " outside schedule of " + std::to_string(s.max_iters));
  std::size_t k = 0;
  while (k < s.milestones.size() && s.milestones[k] <= iter) ++k;
  if (k == 0) return s.base_lr;
  return s.base_lr / std::pow(1.0 / s.decay_factor, static_cast<double>(k));
}

struct WindowSpec {
  std::size_t window_len = 16;
  std::size_t stride = 5;
  /// When a sequence is shorter than the window span, take the single
  /// longest strided window instead of failing.
  bool allow_short = true;

  void validate() const {
    if (window_len == 0 || stride == 0)
      throw ConfigError("WindowSpec: window_len and stride must be >= 1");
  }

  std::size_t span() const { return 1 + (window_len - 1) * stride; }

  nlohmann::json to_json() const {
    return {{"window_len", window_len}, {"stride", stride}, {"allow_short", allow_short}};
  }
};

struct WindowPlacement {
  std::size_t start = 0;
  std::size_t length = 0;  // number of frames taken (== window_len unless short)
};

/// All valid window placements over a sequence of length T. A window starting
/// at t covers indices t, t+stride, ..., t+(len-1)*stride.
inline std::vector<WindowPlacement> window_placements(std::size_t T, const WindowSpec& spec) {
  spec.validate();
  if (T == 0) throw std::invalid_argument("window_placements: empty sequence");
  std::vector<WindowPlacement> out;
  if (T >= spec.span()) {
    for (std::size_t t = 0; t + spec.span() <= T; ++t) out.push_back({t, spec.window_len});
  } else if (spec.allow_short) {
    out.push_back({0, 1 + (T - 1) / spec.stride});
  } else {
    throw std::invalid_argument("window_placements: sequence of length " + std::to_string(T) +
                                " shorter than window span " + std::to_string(spec.span()));
  }
  return out;
}

inline FeatureSequence take_window(const FeatureSequence& seq, const WindowPlacement& w,
                                   std::size_t stride) {
  Matrix out(w.length, seq.cols());
  for (std::size_t i = 0; i < w.length; ++i) {
    auto src = seq.row_span(w.start + i * stride);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

inline std::vector<FeatureSequence> extract_windows(const FeatureSequence& seq,
                                                    const WindowSpec& spec) {
  std::vector<FeatureSequence> out;
  for (const auto& w : window_placements(seq.rows(), spec))
    out.push_back(take_window(seq, w, spec.stride));
  return out;
}

// ---------------------------------------------------------------------------
// train / evaluate
// ---------------------------------------------------------------------------

struct DominanceSample {
  std::size_t iter = 0;  // global iteration index (pretrain + joint)
  double grad_norm_s = 0.0, grad_norm_t = 0.0, ratio = 1.0;
};

struct TrainingReport {
  std::uint64_t seed = 0;
  std::size_t pretrain_iters = 0;  // phase boundary within the curves
  std::vector<double> loss_curve;  // mean batch loss, pretrain then joint
  std::vector<double> lr_curve;
  std::vector<DominanceSample> dominance_samples;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  nlohmann::json config;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["pretrain_iters"] = pretrain_iters;
    j["loss_curve"] = loss_curve;
    j["lr_curve"] = lr_curve;
    j["final_loss"] = final_loss;
    nlohmann::json doms = nlohmann::json::array();
    for (const auto& d : dominance_samples)
      doms.push_back({{"iter", d.iter},
                      {"grad_norm_s", d.grad_norm_s},
                      {"grad_norm_t", d.grad_norm_t},
                      {"ratio", d.ratio}});
    j["dominance_samples"] = doms;
    j["config"] = config;
    return j;
  }
};

struct TrainOptions {
  TrainSchedule joint = TrainSchedule::desk_default();
  TrainSchedule pretrain = TrainSchedule::desk_pretrain();  // max_iters 0 skips the phase
  WindowSpec window{16, 1, true};
  std::uint64_t seed = 1;
  /// Sample the dominance metric every N joint iterations (0: only at end).
  std::size_t dominance_every = 0;
  /// Global gradient-norm clip; 0 disables (default, the protocol uses none).
  double clip_norm = 0.0;
};

/// Two-phase training. Phase 1 trains each branch standalone (encoder plus
/// per-branch classifier); phase 2 trains the configured head jointly.
/// Deterministic given the seed. Throws NumericError at the first
/// non-finite batch loss.
inline TrainingReport train(Model& model, const std::vector<LabeledSequencePair>& dataset,
                            const TrainOptions& opts) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  opts.joint.validate();
  if (opts.pretrain.max_iters > 0) opts.pretrain.validate();
  opts.window.validate();

  Rng rng(opts.seed);
  TrainingReport report;
  report.seed = opts.seed;
  report.pretrain_iters = opts.pretrain.max_iters;
  report.config = {{"joint", opts.joint.to_json()},
                   {"pretrain", opts.pretrain.to_json()},
                   {"window", opts.window.to_json()},
                   {"seed", opts.seed},
                   {"head", to_string(model.spec.head)},
                   {"model", model.spec.to_json()}};

  auto all_refs = model.params();
  const std::size_t n = dataset.size();
  const std::size_t probe = std::min<std::size_t>(8, n);
  std::span<const LabeledSequencePair> probe_batch(dataset.data(), probe);

  struct Phase {
    const TrainSchedule* sched;
    bool pretrain;
  };
  std::size_t global_iter = 0;
  for (Phase phase : {Phase{&opts.pretrain, true}, Phase{&opts.joint, false}}) {
    const TrainSchedule& sched = *phase.sched;
    if (sched.max_iters == 0) continue;
    auto step_refs = phase.pretrain ? model.pretrain_params() : model.joint_params();
    zero_momentum(step_refs);

    for (std::size_t iter = 0; iter < sched.max_iters; ++iter, ++global_iter) {
      double lr = lr_at(sched, iter);
      zero_grads(all_refs);
      double batch_loss = 0.0;
      const double inv_b = 1.0 / static_cast<double>(sched.batch_size);
      for (std::size_t b = 0; b < sched.batch_size; ++b) {
        const auto& pair = dataset[rng.index(n)];
        auto placements = window_placements(pair.seq_s.rows(), opts.window);
        const auto& w = placements[rng.index(placements.size())];
        FeatureSequence ws = take_window(pair.seq_s, w, opts.window.stride);
        FeatureSequence wt = take_window(pair.seq_t, w, opts.window.stride);
        LossOptions lopts{phase.pretrain, LossSelect::both, inv_b};
        batch_loss += inv_b * model_loss_backward(model, ws, wt, pair.label, lopts).loss;
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("train: non-finite loss " + std::to_string(batch_loss) + " at " +
                           (phase.pretrain ? std::string("pretrain") : std::string("joint")) +
                           " iteration " + std::to_string(iter));
      if (opts.clip_norm > 0.0) {
        double gn = std::sqrt(grad_sq_norm(step_refs));
        if (gn > opts.clip_norm) {
          double scale_by = opts.clip_norm / gn;
          for (const auto& p : step_refs)
            for (double& g : p.grad) g *= scale_by;
        }
      }
      sgd_momentum_step(step_refs, lr, sched.momentum);
      report.loss_curve.push_back(batch_loss);
      report.lr_curve.push_back(lr);

      if (!phase.pretrain && opts.dominance_every > 0 && iter % opts.dominance_every == 0) {
        auto dm = dominance_metric(model, probe_batch);
        report.dominance_samples.push_back({global_iter, dm.grad_norm_s, dm.grad_norm_t, dm.ratio});
      }
    }
  }

  auto dm = dominance_metric(model, probe_batch);
  report.dominance_samples.push_back({global_iter, dm.grad_norm_s, dm.grad_norm_t, dm.ratio});
  if (!report.loss_curve.empty()) report.final_loss = report.loss_curve.back();
  return report;
}

struct EvalMetrics {
  double accuracy = 0.0;  // fused prediction
  double accuracy_branch_s = 0.0;
  double accuracy_branch_t = 0.0;
};

/// Per-sequence prediction is the mean of class scores over all extracted
/// windows; accuracy is the fraction of correct argmax predictions.
inline EvalMetrics evaluate_detailed(const Model& model,
                                     const std::vector<LabeledSequencePair>& dataset,
                                     const WindowSpec& window) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  window.validate();
  std::size_t correct = 0, correct_s = 0, correct_t = 0;
  for (const auto& pair : dataset) {
    Vector fused(model.spec.num_classes), ss(model.spec.num_classes), st(model.spec.num_classes);
    auto placements = window_placements(pair.seq_s.rows(), window);
    for (const auto& w : placements) {
      FeatureSequence as = take_window(pair.seq_s, w, window.stride);
      FeatureSequence at = take_window(pair.seq_t, w, window.stride);
      Prediction pred = model_forward(model, as, at);
      axpy(1.0, pred.class_scores, fused);
      axpy(1.0, (*pred.per_branch_scores)[0], ss);
      axpy(1.0, (*pred.per_branch_scores)[1], st);
    }
    if (argmax(fused) == pair.label) ++correct;
    if (argmax(ss) == pair.label) ++correct_s;
    if (argmax(st) == pair.label) ++correct_t;
  }
  const double dn = static_cast<double>(dataset.size());
  return {correct / dn, correct_s / dn, correct_t / dn};
}

inline double evaluate(const Model& model, const std::vector<LabeledSequencePair>& dataset,
                       const WindowSpec& window) {
  return evaluate_detailed(model, dataset, window).accuracy;
}

}  // namespace jna
