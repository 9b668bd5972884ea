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

/// Two-branch model assembly: GRU encoders for each stream plus one of the
/// fusion heads (standalone streams with score averaging, FC fusion, branch
/// selection with or without L2, per-branch spatial attention, or the joint
/// cross-stream attention). Every model keeps per-branch softmax classifiers
/// so per-stream scores can be read out regardless of head.

#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jna/attention.hpp"
#include "jna/checkpoint.hpp"
#include "jna/data.hpp"
#include "jna/gru.hpp"
#include "jna/loss.hpp"
#include "jna/matrix.hpp"
#include "jna/param.hpp"
#include "jna/rng.hpp"

namespace jna {

enum class HeadType {
  separate_streams,
  fc_fusion,
  branch_selection,
  branch_selection_l2,
  spatial_attention,
  jna,
};

inline const char* to_string(HeadType h) {
  switch (h) {
    case HeadType::separate_streams: return "separate_streams";
    case HeadType::fc_fusion: return "fc_fusion";
    case HeadType::branch_selection: return "branch_selection";
    case HeadType::branch_selection_l2: return "branch_selection_l2";
    case HeadType::spatial_attention: return "spatial_attention";
    case HeadType::jna: return "jna";
  }
  return "?";
}

inline HeadType head_from_string(const std::string& s) {
  for (HeadType h : {HeadType::separate_streams, HeadType::fc_fusion, HeadType::branch_selection,
                     HeadType::branch_selection_l2, HeadType::spatial_attention, HeadType::jna})
    if (s == to_string(h)) return h;
  throw ConfigError("unknown head type '" + s + "'");
}

inline bool head_has_trace(HeadType h) {
  return h == HeadType::jna || h == HeadType::branch_selection ||
         h == HeadType::branch_selection_l2 || h == HeadType::spatial_attention;
}

struct ModelSpec {
  HeadType head = HeadType::separate_streams;
  std::size_t dim_s = 32;
  std::size_t dim_t = 32;
  std::vector<std::size_t> gru_layers = {32, 32};
  std::size_t attn_dim = 32;
  std::size_t num_classes = 5;
  std::size_t spatial_k = 0;  // required (> 0) for the spatial_attention head

  void validate() const {
    if (num_classes < 2) throw ConfigError("ModelSpec: need at least 2 classes");
    if (gru_layers.empty()) throw ConfigError("ModelSpec: gru_layers must be nonempty");
    if (dim_s == 0 || dim_t == 0) throw ConfigError("ModelSpec: stream dims must be positive");
    for (std::size_t h : gru_layers)
      if (h == 0) throw ConfigError("ModelSpec: zero hidden dim");
    if (head_has_trace(head) && attn_dim == 0)
      throw ConfigError("ModelSpec: attn_dim must be positive for attention heads");
    if (head == HeadType::spatial_attention) {
      if (spatial_k == 0) throw ConfigError("ModelSpec: spatial_attention needs spatial_k > 0");
      std::size_t kk = spatial_k * spatial_k;
      if (dim_s % kk != 0 || dim_t % kk != 0)
        throw ConfigError("ModelSpec: stream dims must be divisible by spatial_k^2 = " +
                          std::to_string(kk));
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["head"] = to_string(head);
    j["dim_s"] = dim_s;
    j["dim_t"] = dim_t;
    j["gru_layers"] = gru_layers;
    j["attn_dim"] = attn_dim;
    j["num_classes"] = num_classes;
    j["spatial_k"] = spatial_k;
    return j;
  }

  static ModelSpec from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.head = head_from_string(j.at("head").get<std::string>());
    s.dim_s = j.at("dim_s").get<std::size_t>();
    s.dim_t = j.at("dim_t").get<std::size_t>();
    s.gru_layers = j.at("gru_layers").get<std::vector<std::size_t>>();
    s.attn_dim = j.at("attn_dim").get<std::size_t>();
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.spatial_k = j.value("spatial_k", std::size_t{0});
    s.validate();
    return s;
  }
};

struct Prediction {
  Vector class_scores;
  /// {spatial, temporal} softmax scores from the retained per-branch heads.
  std::optional<std::array<Vector, 2>> per_branch_scores;
};

struct Classifier {
  MatParam w;
  VecParam b;

  Classifier() = default;
  Classifier(const std::string& prefix, std::size_t num_classes, std::size_t feat_dim)
      : w(prefix + ".w", Matrix(num_classes, feat_dim)), b(prefix + ".b", Vector(num_classes)) {}

  void init(Rng& rng) { glorot_uniform(w.value, rng); }

  void collect(std::vector<ParamRef>& out) {
    out.push_back(make_ref(w));
    out.push_back(make_ref(b));
  }

  Vector logits(const Vector& x) const {
    Vector out = matvec(w.value, x);
    axpy(1.0, b.value, out);
    return out;
  }
};

/// softmax(W [feat_s; feat_t] + b) over classes.
inline Vector fc_fusion_forward(const Vector& feat_s, const Vector& feat_t, const Classifier& fc) {
  if (fc.w.value.cols() != feat_s.dim() + feat_t.dim())
    throw DimensionError("fc_fusion_forward: weight " + shape_str(fc.w.value) +
                         " vs concat dim " + std::to_string(feat_s.dim() + feat_t.dim()));
  Vector cat(feat_s.dim() + feat_t.dim());
  std::copy(feat_s.begin(), feat_s.end(), cat.begin());
  std::copy(feat_t.begin(), feat_t.end(), cat.begin() + static_cast<std::ptrdiff_t>(feat_s.dim()));
  return softmax(fc.logits(cat));
}

/// Elementwise mean of two softmax score vectors.
inline Vector average_fusion(const Vector& scores_s, const Vector& scores_t) {
  require_same_dim(scores_s, scores_t, "average_fusion");
  Vector out(scores_s.dim());
  for (std::size_t i = 0; i < out.dim(); ++i) out[i] = 0.5 * (scores_s[i] + scores_t[i]);
  return out;
}

enum class Branch { spatial, temporal };

enum class LossSelect { both, spatial_only, temporal_only };

struct LossOptions {
  /// Pretraining phase: each branch trains standalone (encoder + branch
  /// head), with no fusion head and no cross-stream attention.
  bool pretrain = false;
  LossSelect select = LossSelect::both;
  double grad_scale = 1.0;
};

namespace detail {

inline SpatialFeatureMap reshape_to_map(std::span<const double> frame, std::size_t k,
                                        std::size_t channels) {
  // plane-major layout: frame[ch * k*k + pos]
  SpatialFeatureMap map(k, channels);
  const std::size_t kk = k * k;
  for (std::size_t p = 0; p < kk; ++p)
    for (std::size_t ch = 0; ch < channels; ++ch) map.positions[p][ch] = frame[ch * kk + p];
  return map;
}

inline void scatter_map_grad(const std::vector<Vector>& d_positions, std::size_t k,
                             std::size_t channels, std::span<double> d_frame) {
  const std::size_t kk = k * k;
  for (std::size_t p = 0; p < kk; ++p)
    for (std::size_t ch = 0; ch < channels; ++ch) d_frame[ch * kk + p] += d_positions[p][ch];
}

}  // namespace detail

struct BranchCache {
  bool spatial = false;
  // spatial front end
  std::vector<SpatialAttnCache> sp_attn;  // per timestep
  std::vector<GruStepCache> sp_gru;       // layer 0, per timestep
  Vector pooled0;                         // uniform average feeding step 0
  Matrix sp_e, sp_alpha;                  // T x K^2
  std::vector<Vector> layer0_states;
  std::size_t k = 0, channels = 0;
  // stacked encoder (all layers when non-spatial, layers 1.. when spatial)
  EncodeCache enc;
  HiddenSequence states;  // top-layer states
};

class Model {
 public:
  ModelSpec spec;
  std::vector<GruCell> enc_s, enc_t;
  Classifier head_s, head_t;
  std::optional<Classifier> fc_head;
  std::optional<BranchSelectionParams> bs;
  std::optional<Classifier> bs_head;
  std::optional<JnaParams> jna_params;
  std::optional<SpatialAttnParams> sp_s, sp_t;

  std::size_t top_hidden() const { return spec.gru_layers.back(); }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    for (auto& c : enc_s) c.collect(out);
    for (auto& c : enc_t) c.collect(out);
    head_s.collect(out);
    head_t.collect(out);
    if (sp_s) sp_s->collect(out);
    if (sp_t) sp_t->collect(out);
    if (fc_head) fc_head->collect(out);
    if (bs) bs->collect(out);
    if (bs_head) bs_head->collect(out);
    if (jna_params) jna_params->collect(out);
    return out;
  }

  /// Parameters trained during per-branch pretraining.
  std::vector<ParamRef> pretrain_params() {
    std::vector<ParamRef> out;
    for (auto& c : enc_s) c.collect(out);
    for (auto& c : enc_t) c.collect(out);
    head_s.collect(out);
    head_t.collect(out);
    if (sp_s) sp_s->collect(out);
    if (sp_t) sp_t->collect(out);
    return out;
  }

  /// Parameters trained during the joint phase of the configured head.
  std::vector<ParamRef> joint_params() {
    std::vector<ParamRef> out;
    for (auto& c : enc_s) c.collect(out);
    for (auto& c : enc_t) c.collect(out);
    switch (spec.head) {
      case HeadType::separate_streams:
      case HeadType::spatial_attention:
        head_s.collect(out);
        head_t.collect(out);
        if (sp_s) sp_s->collect(out);
        if (sp_t) sp_t->collect(out);
        break;
      case HeadType::fc_fusion:
        fc_head->collect(out);
        break;
      case HeadType::branch_selection:
      case HeadType::branch_selection_l2:
        bs->collect(out);
        bs_head->collect(out);
        break;
      case HeadType::jna:
        head_s.collect(out);
        head_t.collect(out);
        jna_params->collect(out);
        break;
    }
    return out;
  }

  std::vector<ParamRef> branch_params(Branch b) {
    std::vector<ParamRef> out;
    auto& enc = (b == Branch::spatial) ? enc_s : enc_t;
    for (auto& c : enc) c.collect(out);
    ((b == Branch::spatial) ? head_s : head_t).collect(out);
    auto& sp = (b == Branch::spatial) ? sp_s : sp_t;
    if (sp) sp->collect(out);
    return out;
  }
};

inline Model build_model(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  Model m;
  m.spec = spec;

  const bool spatial = spec.head == HeadType::spatial_attention;
  const std::size_t kk = spatial ? spec.spatial_k * spec.spatial_k : 0;
  const std::size_t in_s = spatial ? spec.dim_s / kk : spec.dim_s;
  const std::size_t in_t = spatial ? spec.dim_t / kk : spec.dim_t;

  auto make_stack = [&](const char* prefix, std::size_t in_dim) {
    std::vector<GruCell> cells;
    std::size_t d = in_dim;
    for (std::size_t l = 0; l < spec.gru_layers.size(); ++l) {
      cells.emplace_back(std::string(prefix) + ".gru" + std::to_string(l), d, spec.gru_layers[l]);
      d = spec.gru_layers[l];
    }
    return cells;
  };
  m.enc_s = make_stack("enc_s", in_s);
  m.enc_t = make_stack("enc_t", in_t);
  m.head_s = Classifier("head_s", spec.num_classes, m.top_hidden());
  m.head_t = Classifier("head_t", spec.num_classes, m.top_hidden());

  switch (spec.head) {
    case HeadType::separate_streams:
      break;
    case HeadType::fc_fusion:
      m.fc_head = Classifier("fc_head", spec.num_classes, 2 * m.top_hidden());
      break;
    case HeadType::branch_selection:
    case HeadType::branch_selection_l2:
      m.bs = BranchSelectionParams("bs", spec.attn_dim, m.top_hidden());
      m.bs_head = Classifier("bs_head", spec.num_classes, m.top_hidden());
      break;
    case HeadType::spatial_attention:
      m.sp_s = SpatialAttnParams("sp_s", spec.attn_dim, spec.gru_layers[0], in_s);
      m.sp_t = SpatialAttnParams("sp_t", spec.attn_dim, spec.gru_layers[0], in_t);
      break;
    case HeadType::jna:
      m.jna_params = JnaParams("jna", spec.attn_dim, m.top_hidden(), m.top_hidden());
      break;
  }

  // Fixed initialization order so a seed pins every weight.
  for (auto& c : m.enc_s) c.init(rng);
  for (auto& c : m.enc_t) c.init(rng);
  m.head_s.init(rng);
  m.head_t.init(rng);
  if (m.sp_s) m.sp_s->init(rng);
  if (m.sp_t) m.sp_t->init(rng);
  if (m.fc_head) m.fc_head->init(rng);
  if (m.bs) m.bs->init(rng);
  if (m.bs_head) m.bs_head->init(rng);
  if (m.jna_params) m.jna_params->init(rng);
  return m;
}

namespace detail {

/// Forward of one branch. For the spatial head, the first GRU layer is
/// interleaved with spatial attention: the attention at step t queries the
/// layer's previous hidden state and its pooled output is the layer input at
/// step t+1 (the very first input is the uniform average of frame 0's map).
inline HiddenSequence encode_branch(const Model& m, Branch b, const FeatureSequence& seq,
                                    BranchCache& cache) {
  const auto& enc = (b == Branch::spatial) ? m.enc_s : m.enc_t;
  cache.spatial = m.spec.head == HeadType::spatial_attention;
  if (!cache.spatial) {
    cache.states = encode_sequence(enc, seq, &cache.enc);
    return cache.states;
  }

  const auto& sp = (b == Branch::spatial) ? *m.sp_s : *m.sp_t;
  const GruCell& l0 = enc[0];
  const std::size_t T = seq.rows();
  if (T == 0) throw std::invalid_argument("encode_branch: empty sequence");
  const std::size_t k = m.spec.spatial_k;
  const std::size_t kk = k * k;
  const std::size_t channels = seq.cols() / kk;
  if (channels * kk != seq.cols())
    throw DimensionError("encode_branch: feature dim not divisible by K^2");

  cache.k = k;
  cache.channels = channels;
  cache.sp_attn.resize(T);
  cache.sp_gru.resize(T);
  cache.sp_e = Matrix(T, kk);
  cache.sp_alpha = Matrix(T, kk);
  cache.layer0_states.resize(T);

  SpatialFeatureMap map0 = reshape_to_map(seq.row_span(0), k, channels);
  Vector pooled(channels);
  for (const auto& pos : map0.positions) axpy(1.0 / static_cast<double>(kk), pos, pooled);
  cache.pooled0 = pooled;

  Vector h_prev(l0.hidden_dim);
  for (std::size_t t = 0; t < T; ++t) {
    SpatialFeatureMap map = (t == 0) ? map0 : reshape_to_map(seq.row_span(t), k, channels);
    Vector h = gru_step(l0, pooled, h_prev, &cache.sp_gru[t]);
    auto attn = spatial_attention(sp, map, h_prev, &cache.sp_attn[t]);
    for (std::size_t p = 0; p < kk; ++p) {
      cache.sp_e(t, p) = attn.scores[p];
      cache.sp_alpha(t, p) = attn.weights.data()[p];
    }
    pooled = std::move(attn.pooled);
    cache.layer0_states[t] = h;
    h_prev = std::move(h);
  }

  if (enc.size() == 1) {
    cache.states = cache.layer0_states;
    return cache.states;
  }
  Matrix mid(T, l0.hidden_dim);
  for (std::size_t t = 0; t < T; ++t) mid.set_row(t, cache.layer0_states[t]);
  cache.states = encode_sequence(std::span<const GruCell>(enc).subspan(1), mid, &cache.enc);
  return cache.states;
}

/// Backward of one branch; returns dL/d(input sequence).
inline Matrix backward_branch(Model& m, Branch b, const FeatureSequence& seq, BranchCache& cache,
                              const std::vector<Vector>& upstream) {
  auto& enc = (b == Branch::spatial) ? m.enc_s : m.enc_t;
  if (!cache.spatial) return encode_backward(enc, cache.enc, upstream);

  const std::size_t T = seq.rows();
  std::vector<Vector> d_layer0(T);
  if (enc.size() == 1) {
    d_layer0 = upstream;
  } else {
    Matrix dmid = encode_backward(std::span<GruCell>(enc).subspan(1), cache.enc, upstream);
    for (std::size_t t = 0; t < T; ++t) d_layer0[t] = dmid.row_vec(t);
  }

  auto& sp = (b == Branch::spatial) ? *m.sp_s : *m.sp_t;
  GruCell& l0 = enc[0];
  const std::size_t k = cache.k, kk = k * k, channels = cache.channels;

  Matrix d_seq(T, seq.cols());
  std::vector<Vector> d_pooled_out(T, Vector(channels));  // grad of attention output at step t
  Vector carry(l0.hidden_dim);
  Vector d_pooled0(channels);
  for (std::size_t t = T; t-- > 0;) {
    Vector dh = add(d_layer0[t], carry);
    auto g = gru_step_backward(l0, cache.sp_gru[t], dh);
    if (t == 0)
      d_pooled0 = std::move(g.dx);
    else
      d_pooled_out[t - 1] = std::move(g.dx);
    carry = std::move(g.dh_prev);

    auto ag = spatial_attention_backward(sp, cache.sp_attn[t], d_pooled_out[t]);
    axpy(1.0, ag.d_query, carry);
    scatter_map_grad(ag.d_positions, k, channels, d_seq.row_span(t));
  }
  // pooled0 was the uniform average over frame 0's positions
  {
    std::vector<Vector> dpos(kk, scale(d_pooled0, 1.0 / static_cast<double>(kk)));
    scatter_map_grad(dpos, k, channels, d_seq.row_span(0));
  }
  return d_seq;
}

/// Mean softmax of a shared per-timestep classifier (inference path).
inline Vector mean_softmax_scores(const Classifier& clf, const std::vector<Vector>& feats) {
  Vector acc(clf.w.value.rows());
  for (const auto& f : feats) axpy(1.0, softmax(clf.logits(f)), acc);
  return scale(acc, 1.0 / static_cast<double>(feats.size()));
}

/// Mean-over-timesteps cross-entropy of a shared classifier. Accumulates
/// classifier gradients (scaled) and writes per-feature gradients.
inline double per_timestep_ce_backward(Classifier& clf, const std::vector<Vector>& feats,
                                       std::size_t label, double grad_scale,
                                       std::vector<Vector>& d_feats) {
  const double inv_t = 1.0 / static_cast<double>(feats.size());
  double loss = 0.0;
  d_feats.assign(feats.size(), Vector(feats[0].dim()));
  for (std::size_t t = 0; t < feats.size(); ++t) {
    Vector dlogits;
    loss += inv_t * cross_entropy_from_logits(clf.logits(feats[t]), label, &dlogits);
    for (double& d : dlogits) d *= grad_scale * inv_t;
    add_outer(clf.w.grad, dlogits, feats[t]);
    axpy(1.0, dlogits, clf.b.grad);
    d_feats[t] = matvec_t(clf.w.value, dlogits);
  }
  return loss;
}

}  // namespace detail

/// Inference pass. Fills `trace` for attention heads when non-null.
inline Prediction model_forward(const Model& m, const FeatureSequence& seq_s,
                                const FeatureSequence& seq_t, AttentionTrace* trace = nullptr) {
  if (seq_s.rows() != seq_t.rows())
    throw std::invalid_argument("model_forward: stream lengths differ");
  BranchCache cs, ct;
  HiddenSequence hs = detail::encode_branch(m, Branch::spatial, seq_s, cs);
  HiddenSequence ht = detail::encode_branch(m, Branch::temporal, seq_t, ct);

  Prediction pred;
  Vector br_s, br_t;
  switch (m.spec.head) {
    case HeadType::separate_streams:
    case HeadType::spatial_attention: {
      br_s = detail::mean_softmax_scores(m.head_s, hs);
      br_t = detail::mean_softmax_scores(m.head_t, ht);
      pred.class_scores = average_fusion(br_s, br_t);
      if (trace && m.spec.head == HeadType::spatial_attention)
        *trace = AttentionTrace{"spatial_attention", cs.sp_e, ct.sp_e, cs.sp_alpha, ct.sp_alpha};
      break;
    }
    case HeadType::fc_fusion: {
      br_s = detail::mean_softmax_scores(m.head_s, hs);
      br_t = detail::mean_softmax_scores(m.head_t, ht);
      pred.class_scores = fc_fusion_forward(hs.back(), ht.back(), *m.fc_head);
      break;
    }
    case HeadType::branch_selection:
    case HeadType::branch_selection_l2: {
      br_s = detail::mean_softmax_scores(m.head_s, hs);
      br_t = detail::mean_softmax_scores(m.head_t, ht);
      bool l2 = m.spec.head == HeadType::branch_selection_l2;
      auto sel = branch_selection(*m.bs, hs.back(), ht.back(), l2);
      pred.class_scores = softmax(m.bs_head->logits(sel.fused));
      if (trace) {
        Matrix e(1, 2), alpha(1, 2);
        e(0, 0) = sel.scores[0];
        e(0, 1) = sel.scores[1];
        alpha(0, 0) = sel.weights[0];
        alpha(0, 1) = sel.weights[1];
        *trace = AttentionTrace{"branch_selection", e, Matrix{}, alpha, Matrix{}};
      }
      break;
    }
    case HeadType::jna: {
      auto jr = jna_forward(*m.jna_params, hs, ht);
      br_s = detail::mean_softmax_scores(m.head_s, jr.o_h);
      br_t = detail::mean_softmax_scores(m.head_t, jr.o_g);
      pred.class_scores = average_fusion(br_s, br_t);
      if (trace) *trace = std::move(jr.trace);
      break;
    }
  }
  pred.per_branch_scores = {std::move(br_s), std::move(br_t)};
  return pred;
}

struct LossResult {
  double loss = 0.0;
  Matrix d_input_s, d_input_t;  // dL/d(raw input features), T x dim
};

/// Training pass: loss plus one full backward. Parameter gradients
/// accumulate into the model (scaled by opts.grad_scale); the returned input
/// gradients feed the dominance metric.
inline LossResult model_loss_backward(Model& m, const FeatureSequence& seq_s,
                                      const FeatureSequence& seq_t, std::size_t label,
                                      const LossOptions& opts = {}) {
  if (seq_s.rows() != seq_t.rows())
    throw std::invalid_argument("model_loss_backward: stream lengths differ");
  if (label >= m.spec.num_classes)
    throw std::invalid_argument("model_loss_backward: label out of range");

  BranchCache cs, ct;
  HiddenSequence hs = detail::encode_branch(m, Branch::spatial, seq_s, cs);
  HiddenSequence ht = detail::encode_branch(m, Branch::temporal, seq_t, ct);
  const std::size_t T = hs.size();

  const bool want_s = opts.select != LossSelect::temporal_only;
  const bool want_t = opts.select != LossSelect::spatial_only;

  HeadType head = opts.pretrain ? HeadType::separate_streams : m.spec.head;
  if (opts.pretrain && m.spec.head == HeadType::spatial_attention)
    head = HeadType::spatial_attention;  // the branch architecture includes its attention

  LossResult res;
  std::vector<Vector> d_hs(T, Vector(m.top_hidden())), d_ht(T, Vector(m.top_hidden()));

  switch (head) {
    case HeadType::separate_streams:
    case HeadType::spatial_attention: {
      if (want_s)
        res.loss += detail::per_timestep_ce_backward(m.head_s, hs, label, opts.grad_scale, d_hs);
      if (want_t)
        res.loss += detail::per_timestep_ce_backward(m.head_t, ht, label, opts.grad_scale, d_ht);
      break;
    }
    case HeadType::fc_fusion: {
      if (opts.select != LossSelect::both)
        throw ConfigError("model_loss_backward: fc_fusion loss is not branch-separable");
      Vector cat(2 * m.top_hidden());
      std::copy(hs.back().begin(), hs.back().end(), cat.begin());
      std::copy(ht.back().begin(), ht.back().end(),
                cat.begin() + static_cast<std::ptrdiff_t>(m.top_hidden()));
      Vector dlogits;
      res.loss = cross_entropy_from_logits(m.fc_head->logits(cat), label, &dlogits);
      for (double& d : dlogits) d *= opts.grad_scale;
      add_outer(m.fc_head->w.grad, dlogits, cat);
      axpy(1.0, dlogits, m.fc_head->b.grad);
      Vector dcat = matvec_t(m.fc_head->w.value, dlogits);
      for (std::size_t i = 0; i < m.top_hidden(); ++i) {
        d_hs[T - 1][i] += dcat[i];
        d_ht[T - 1][i] += dcat[m.top_hidden() + i];
      }
      break;
    }
    case HeadType::branch_selection:
    case HeadType::branch_selection_l2: {
      if (opts.select != LossSelect::both)
        throw ConfigError("model_loss_backward: branch_selection loss is not branch-separable");
      bool l2 = head == HeadType::branch_selection_l2;
      BranchSelectionCache bcache;
      auto sel = branch_selection(*m.bs, hs.back(), ht.back(), l2, &bcache);
      Vector dlogits;
      res.loss = cross_entropy_from_logits(m.bs_head->logits(sel.fused), label, &dlogits);
      for (double& d : dlogits) d *= opts.grad_scale;
      add_outer(m.bs_head->w.grad, dlogits, sel.fused);
      axpy(1.0, dlogits, m.bs_head->b.grad);
      Vector d_fused = matvec_t(m.bs_head->w.value, dlogits);
      auto bg = branch_selection_backward(*m.bs, bcache, d_fused);
      axpy(1.0, bg.dx1, d_hs[T - 1]);
      axpy(1.0, bg.dx2, d_ht[T - 1]);
      break;
    }
    case HeadType::jna: {
      JnaCache jcache;
      auto jr = jna_forward(*m.jna_params, hs, ht, &jcache);
      std::vector<Vector> d_oh(T, Vector(m.top_hidden())), d_og(T, Vector(m.top_hidden()));
      if (want_s)
        res.loss += detail::per_timestep_ce_backward(m.head_s, jr.o_h, label, opts.grad_scale, d_oh);
      if (want_t)
        res.loss += detail::per_timestep_ce_backward(m.head_t, jr.o_g, label, opts.grad_scale, d_og);
      auto jg = jna_backward(*m.jna_params, jcache, d_oh, d_og);
      d_hs = std::move(jg.dh);
      d_ht = std::move(jg.dg);
      break;
    }
  }

  res.d_input_s = detail::backward_branch(m, Branch::spatial, seq_s, cs, d_hs);
  res.d_input_t = detail::backward_branch(m, Branch::temporal, seq_t, ct, d_ht);
  return res;
}

struct DominanceMetric {
  double grad_norm_s = 0.0;
  double grad_norm_t = 0.0;
  double ratio = 1.0;  // max over min, capped
};

inline constexpr double kDominanceRatioCap = 1e12;

/// L2 norms of the loss gradient w.r.t. each stream's raw input features
/// over a batch, and their ratio (>= 1); a starved stream drives the ratio
/// up. Clobbers and then clears the model's gradient buffers.
inline DominanceMetric dominance_metric(Model& m, std::span<const LabeledSequencePair> batch) {
  if (batch.empty()) throw std::invalid_argument("dominance_metric: empty batch");
  auto refs = m.params();
  zero_grads(refs);
  double ss = 0.0, st = 0.0;
  for (const auto& pair : batch) {
    auto res = model_loss_backward(m, pair.seq_s, pair.seq_t, pair.label);
    for (double v : res.d_input_s.span()) ss += v * v;
    for (double v : res.d_input_t.span()) st += v * v;
  }
  zero_grads(refs);
  DominanceMetric out;
  out.grad_norm_s = std::sqrt(ss);
  out.grad_norm_t = std::sqrt(st);
  double hi = std::max(out.grad_norm_s, out.grad_norm_t);
  double lo = std::min(out.grad_norm_s, out.grad_norm_t);
  if (hi == 0.0)
    out.ratio = 1.0;
  else if (lo == 0.0 || hi / lo > kDominanceRatioCap)
    out.ratio = kDominanceRatioCap;
  else
    out.ratio = hi / lo;
  return out;
}

// ---- model checkpoints ----

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormatName = "jna-model";

inline void save_model(const std::string& path, Model& m) {
  nlohmann::json j;
  j["format"] = kModelFormatName;
  j["version"] = kModelFormatVersion;
  j["spec"] = m.spec.to_json();
  j["params"] = params_to_json(m.params());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != kModelFormatName)
    throw ConfigError("'" + path + "' is not a " + std::string(kModelFormatName) + " file");
  if (j.value("version", -1) != kModelFormatVersion)
    throw ConfigError("unsupported model version in '" + path + "'");
  ModelSpec spec = ModelSpec::from_json(j.at("spec"));
  Rng rng(0);  // values are overwritten below
  Model m = build_model(spec, rng);
  params_from_json(j.at("params"), m.params());
  return m;
}

}  // namespace jna
