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

/// Central finite-difference gradient checks for every differentiable
/// operation, on randomized small instances. Each suite perturbs every
/// parameter and input entry of its instance and compares against the
/// hand-written backward pass.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "jna/attention.hpp"
#include "jna/gru.hpp"
#include "jna/loss.hpp"
#include "jna/model.hpp"
#include "jna/param.hpp"
#include "jna/rng.hpp"

namespace jna {

/// Error normalized by max(1, |a|, |n|): relative for large gradients,
/// absolute (well above finite-difference noise) for vanishing ones.
inline double grad_rel_err(double analytic, double numeric) {
  double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

/// Central differences of a scalar functional w.r.t. every entry of xs.
template <class F>
std::vector<double> central_diff(F&& f, std::span<double> xs, double eps = 1e-5) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double saved = xs[i];
    xs[i] = saved + eps;
    double f1 = f();
    xs[i] = saved - eps;
    double f2 = f();
    xs[i] = saved;
    out[i] = (f1 - f2) / (2.0 * eps);
  }
  return out;
}

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  int instances = 0;
  bool pass() const { return max_rel_err < tolerance; }
};

namespace gradcheck_detail {

inline void randomize(const std::vector<ParamRef>& refs, Rng& rng, double lo = -0.7,
                      double hi = 0.7) {
  for (const auto& p : refs)
    for (double& v : p.value) v = rng.uniform(lo, hi);
}

inline Vector random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

struct Target {
  std::span<double> values;
  std::vector<double> analytic;  // filled after the analytic pass
};

/// Runs FD over all targets against `f`, then compares with the analytic
/// entries (which the caller fills in between).
class Checker {
 public:
  void add(std::span<double> values) { targets_.push_back({values, {}}); }

  template <class F>
  void run_fd(F&& f, double eps = 1e-5) {
    numeric_.clear();
    for (auto& t : targets_) numeric_.push_back(central_diff(f, t.values, eps));
  }

  void set_analytic(std::size_t idx, std::span<const double> grads) {
    targets_[idx].analytic.assign(grads.begin(), grads.end());
  }

  double max_err() const {
    double m = 0.0;
    for (std::size_t t = 0; t < targets_.size(); ++t)
      for (std::size_t i = 0; i < numeric_[t].size(); ++i)
        m = std::max(m, grad_rel_err(targets_[t].analytic[i], numeric_[t][i]));
    return m;
  }

  std::size_t size() const { return targets_.size(); }

 private:
  std::vector<Target> targets_;
  std::vector<std::vector<double>> numeric_;
};

inline std::vector<double> flatten(const std::vector<Vector>& vs) {
  std::vector<double> out;
  for (const auto& v : vs) out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace gradcheck_detail

inline GradCheckResult check_gru_step(int seeds = 20) {
  using namespace gradcheck_detail;
  GradCheckResult res{"gru_step"};
  res.instances = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(1000 + static_cast<std::uint64_t>(s));
    GruCell cell("cell", 3, 4);
    std::vector<ParamRef> refs;
    cell.collect(refs);
    randomize(refs, rng);
    Vector x = random_vector(rng, 3);
    Vector h_prev = random_vector(rng, 4, -0.9, 0.9);
    Vector w = random_vector(rng, 4);

    Checker chk;
    for (const auto& p : refs) chk.add(p.value);
    chk.add(x.span());
    chk.add(h_prev.span());
    chk.run_fd([&] { return dot(w, gru_step(cell, x, h_prev)); });

    zero_grads(refs);
    GruStepCache cache;
    gru_step(cell, x, h_prev, &cache);
    auto grads = gru_step_backward(cell, cache, w);
    std::size_t idx = 0;
    for (const auto& p : refs) chk.set_analytic(idx++, p.grad);
    chk.set_analytic(idx++, grads.dx.span());
    chk.set_analytic(idx++, grads.dh_prev.span());
    res.max_rel_err = std::max(res.max_rel_err, chk.max_err());
  }
  return res;
}

inline GradCheckResult check_gru_bptt(int seeds = 20) {
  using namespace gradcheck_detail;
  GradCheckResult res{"gru_bptt"};
  res.instances = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(2000 + static_cast<std::uint64_t>(s));
    std::vector<GruCell> cells;
    cells.emplace_back("l0", 2, 3);
    cells.emplace_back("l1", 3, 2);
    std::vector<ParamRef> refs;
    for (auto& c : cells) c.collect(refs);
    randomize(refs, rng);
    const std::size_t T = 3;
    Matrix seq(T, 2);
    for (double& v : seq.span()) v = rng.uniform(-1.0, 1.0);
    std::vector<Vector> w(T);
    for (auto& wi : w) wi = random_vector(rng, 2);

    auto objective = [&] {
      auto states = encode_sequence(cells, seq);
      double v = 0.0;
      for (std::size_t t = 0; t < T; ++t) v += dot(w[t], states[t]);
      return v;
    };

    Checker chk;
    for (const auto& p : refs) chk.add(p.value);
    chk.add(seq.span());
    chk.run_fd(objective);

    zero_grads(refs);
    EncodeCache cache;
    encode_sequence(cells, seq, &cache);
    Matrix dseq = encode_backward(cells, cache, w);
    std::size_t idx = 0;
    for (const auto& p : refs) chk.set_analytic(idx++, p.grad);
    chk.set_analytic(idx++, dseq.span());
    res.max_rel_err = std::max(res.max_rel_err, chk.max_err());
  }
  return res;
}

inline GradCheckResult check_additive_attention(int seeds = 20) {
  using namespace gradcheck_detail;
  GradCheckResult res{"additive_attention"};
  res.instances = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(3000 + static_cast<std::uint64_t>(s));
    AdditiveAttnParams params("attn", 3, 3, 2);
    std::vector<ParamRef> refs;
    params.collect(refs);
    randomize(refs, rng);
    std::vector<Vector> keys(3);
    for (auto& k : keys) k = random_vector(rng, 3);
    Vector query = random_vector(rng, 2);
    Vector wc = random_vector(rng, 3), ww = random_vector(rng, 3);

    auto objective = [&] {
      auto r = additive_attention(params, keys, query);
      return dot(wc, r.context) + dot(ww, r.weights);
    };

    Checker chk;
    for (const auto& p : refs) chk.add(p.value);
    for (auto& k : keys) chk.add(k.span());
    chk.add(query.span());
    chk.run_fd(objective);

    zero_grads(refs);
    AdditiveAttnCache cache;
    additive_attention(params, keys, query, &cache);
    auto grads = additive_attention_backward(params, cache, wc, &ww);
    std::size_t idx = 0;
    for (const auto& p : refs) chk.set_analytic(idx++, p.grad);
    for (auto& dk : grads.d_keys) chk.set_analytic(idx++, dk.span());
    chk.set_analytic(idx++, grads.d_query.span());
    res.max_rel_err = std::max(res.max_rel_err, chk.max_err());
  }
  return res;
}

inline GradCheckResult check_branch_selection(int seeds = 20) {
  using namespace gradcheck_detail;
  GradCheckResult res{"branch_selection"};
  res.instances = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(4000 + static_cast<std::uint64_t>(s));
    const bool l2 = (s % 2) == 1;  // alternate plain and L2-normalized
    BranchSelectionParams params("bs", 2, 3);
    std::vector<ParamRef> refs;
    params.collect(refs);
    randomize(refs, rng);
    Vector x1 = random_vector(rng, 3, 0.3, 1.2);
    Vector x2 = random_vector(rng, 3, -1.2, -0.3);
    Vector wf = random_vector(rng, 3), ww = random_vector(rng, 2);

    auto objective = [&] {
      auto r = branch_selection(params, x1, x2, l2);
      return dot(wf, r.fused) + dot(ww, r.weights);
    };

    Checker chk;
    for (const auto& p : refs) chk.add(p.value);
    chk.add(x1.span());
    chk.add(x2.span());
    chk.run_fd(objective);

    zero_grads(refs);
    BranchSelectionCache cache;
    branch_selection(params, x1, x2, l2, &cache);
    auto grads = branch_selection_backward(params, cache, wf, &ww);
    std::size_t idx = 0;
    for (const auto& p : refs) chk.set_analytic(idx++, p.grad);
    chk.set_analytic(idx++, grads.dx1.span());
    chk.set_analytic(idx++, grads.dx2.span());
    res.max_rel_err = std::max(res.max_rel_err, chk.max_err());
  }
  return res;
}

inline GradCheckResult check_spatial_attention(int seeds = 20) {
  using namespace gradcheck_detail;
  GradCheckResult res{"spatial_attention"};
  res.instances = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(5000 + static_cast<std::uint64_t>(s));
    SpatialAttnParams params("sp", 2, 3, 2);
    std::vector<ParamRef> refs;
    params.collect(refs);
    randomize(refs, rng);
    SpatialFeatureMap map(2, 2);
    for (auto& pos : map.positions) pos = random_vector(rng, 2);
    Vector query = random_vector(rng, 3);
    Vector wp = random_vector(rng, 2), ww = random_vector(rng, 4);

    auto objective = [&] {
      auto r = spatial_attention(params, map, query);
      double v = dot(wp, r.pooled);
      for (std::size_t p = 0; p < 4; ++p) v += ww[p] * r.weights.data()[p];
      return v;
    };

    Checker chk;
    for (const auto& p : refs) chk.add(p.value);
    for (auto& pos : map.positions) chk.add(pos.span());
    chk.add(query.span());
    chk.run_fd(objective);

    zero_grads(refs);
    SpatialAttnCache cache;
    spatial_attention(params, map, query, &cache);
    auto grads = spatial_attention_backward(params, cache, wp, &ww);
    std::size_t idx = 0;
    for (const auto& p : refs) chk.set_analytic(idx++, p.grad);
    for (auto& dp : grads.d_positions) chk.set_analytic(idx++, dp.span());
    chk.set_analytic(idx++, grads.d_query.span());
    res.max_rel_err = std::max(res.max_rel_err, chk.max_err());
  }
  return res;
}

inline GradCheckResult check_jna(int seeds = 20) {
  using namespace gradcheck_detail;
  GradCheckResult res{"jna"};
  res.instances = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(6000 + static_cast<std::uint64_t>(s));
    const std::size_t T = 3, dh = 2, dg = 3;
    JnaParams params("jna", 2, dh, dg);
    std::vector<ParamRef> refs;
    params.collect(refs);
    randomize(refs, rng);
    HiddenSequence h(T), g(T);
    for (auto& v : h) v = random_vector(rng, dh);
    for (auto& v : g) v = random_vector(rng, dg);
    std::vector<Vector> wh(T), wg(T);
    for (auto& v : wh) v = random_vector(rng, dh);
    for (auto& v : wg) v = random_vector(rng, dg);

    auto objective = [&] {
      auto r = jna_forward(params, h, g);
      double v = 0.0;
      for (std::size_t t = 0; t < T; ++t) v += dot(wh[t], r.o_h[t]) + dot(wg[t], r.o_g[t]);
      return v;
    };

    Checker chk;
    for (const auto& p : refs) chk.add(p.value);
    for (auto& v : h) chk.add(v.span());
    for (auto& v : g) chk.add(v.span());
    chk.run_fd(objective);

    zero_grads(refs);
    JnaCache cache;
    jna_forward(params, h, g, &cache);
    auto grads = jna_backward(params, cache, wh, wg);
    std::size_t idx = 0;
    for (const auto& p : refs) chk.set_analytic(idx++, p.grad);
    for (auto& dv : grads.dh) chk.set_analytic(idx++, dv.span());
    for (auto& dv : grads.dg) chk.set_analytic(idx++, dv.span());
    res.max_rel_err = std::max(res.max_rel_err, chk.max_err());
  }
  return res;
}

inline GradCheckResult check_fc_fusion(int seeds = 20) {
  using namespace gradcheck_detail;
  GradCheckResult res{"fc_fusion"};
  res.instances = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(7000 + static_cast<std::uint64_t>(s));
    Classifier fc("fc", 3, 5);
    std::vector<ParamRef> refs;
    fc.collect(refs);
    randomize(refs, rng);
    Vector fs = random_vector(rng, 3), ft = random_vector(rng, 2);
    Vector w = random_vector(rng, 3);

    auto objective = [&] { return dot(w, fc_fusion_forward(fs, ft, fc)); };

    Checker chk;
    for (const auto& p : refs) chk.add(p.value);
    chk.add(fs.span());
    chk.add(ft.span());
    chk.run_fd(objective);

    zero_grads(refs);
    Vector cat(5);
    std::copy(fs.begin(), fs.end(), cat.begin());
    std::copy(ft.begin(), ft.end(), cat.begin() + 3);
    Vector scores = softmax(fc.logits(cat));
    Vector dlogits = softmax_backward(scores, w);
    add_outer(fc.w.grad, dlogits, cat);
    axpy(1.0, dlogits, fc.b.grad);
    Vector dcat = matvec_t(fc.w.value, dlogits);
    Vector dfs(3), dft(2);
    for (std::size_t i = 0; i < 3; ++i) dfs[i] = dcat[i];
    for (std::size_t i = 0; i < 2; ++i) dft[i] = dcat[3 + i];
    std::size_t idx = 0;
    for (const auto& p : refs) chk.set_analytic(idx++, p.grad);
    chk.set_analytic(idx++, dfs.span());
    chk.set_analytic(idx++, dft.span());
    res.max_rel_err = std::max(res.max_rel_err, chk.max_err());
  }
  return res;
}

inline GradCheckResult check_cross_entropy(int seeds = 20) {
  using namespace gradcheck_detail;
  GradCheckResult res{"cross_entropy"};
  res.instances = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(8000 + static_cast<std::uint64_t>(s));
    Vector logits = random_vector(rng, 4, -2.0, 2.0);
    std::size_t label = rng.index(4);

    Checker chk;
    chk.add(logits.span());
    chk.run_fd([&] { return cross_entropy_from_logits(logits, label); });

    Vector dlogits;
    cross_entropy_from_logits(logits, label, &dlogits);
    chk.set_analytic(0, dlogits.span());
    res.max_rel_err = std::max(res.max_rel_err, chk.max_err());
  }
  return res;
}

/// Full model: GRU encoders + cross-stream attention + per-branch
/// classifiers, loss summed over both branches.
inline GradCheckResult check_end_to_end_jna(int seeds = 20) {
  using namespace gradcheck_detail;
  GradCheckResult res{"end_to_end_jna", 0.0, 1e-3};
  res.instances = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(9000 + static_cast<std::uint64_t>(s));
    ModelSpec spec;
    spec.head = HeadType::jna;
    spec.dim_s = 2;
    spec.dim_t = 2;
    spec.gru_layers = {2, 2};
    spec.attn_dim = 2;
    spec.num_classes = 2;
    Model model = build_model(spec, rng);
    auto refs = model.params();
    randomize(refs, rng);

    const std::size_t T = 3;
    Matrix seq_s(T, 2), seq_t(T, 2);
    for (double& v : seq_s.span()) v = rng.uniform(-1.0, 1.0);
    for (double& v : seq_t.span()) v = rng.uniform(-1.0, 1.0);
    std::size_t label = rng.index(2);

    auto objective = [&] {
      return model_loss_backward(model, seq_s, seq_t, label).loss;
    };

    Checker chk;
    for (const auto& p : refs) chk.add(p.value);
    chk.add(seq_s.span());
    chk.add(seq_t.span());
    chk.run_fd(objective);

    zero_grads(refs);
    auto lr = model_loss_backward(model, seq_s, seq_t, label);
    std::size_t idx = 0;
    for (const auto& p : refs) chk.set_analytic(idx++, p.grad);
    chk.set_analytic(idx++, lr.d_input_s.span());
    chk.set_analytic(idx++, lr.d_input_t.span());
    res.max_rel_err = std::max(res.max_rel_err, chk.max_err());
  }
  return res;
}

inline std::vector<GradCheckResult> run_all_gradient_checks(int seeds = 20) {
  return {check_gru_step(seeds),      check_gru_bptt(seeds),
          check_additive_attention(seeds), check_branch_selection(seeds),
          check_spatial_attention(seeds),  check_jna(seeds),
          check_fc_fusion(seeds),     check_cross_entropy(seeds),
          check_end_to_end_jna(seeds)};
}

}  // namespace jna
