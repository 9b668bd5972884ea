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

/// The four attention mechanisms: generic additive attention, two-input
/// branch selection, spatial attention over a K x K feature map, and the
/// joint cross-stream temporal attention (jna). Each has a forward pass
/// with optional cache and an exact hand-written backward pass.

#pragma once

#include <string>
#include <vector>

#include "jna/gru.hpp"
#include "jna/matrix.hpp"
#include "jna/param.hpp"

namespace jna {

// ---------------------------------------------------------------------------
// additive attention: e_i = v . tanh(W1 key_i + W2 query), weights = softmax(e)
// ---------------------------------------------------------------------------

struct AdditiveAttnParams {
  VecParam v;
  MatParam w1, w2;  // attn_dim x key_dim, attn_dim x query_dim

  AdditiveAttnParams() = default;
  AdditiveAttnParams(const std::string& prefix, std::size_t attn_dim, std::size_t key_dim,
                     std::size_t query_dim)
      : v(prefix + ".v", Vector(attn_dim)),
        w1(prefix + ".w1", Matrix(attn_dim, key_dim)),
        w2(prefix + ".w2", Matrix(attn_dim, query_dim)) {}

  // v starts at zero (uniform weights), matrices Glorot.
  void init(Rng& rng) {
    glorot_uniform(w1.value, rng);
    glorot_uniform(w2.value, rng);
  }

  void collect(std::vector<ParamRef>& out) {
    out.push_back(make_ref(v));
    out.push_back(make_ref(w1));
    out.push_back(make_ref(w2));
  }
};

struct AdditiveAttnCache {
  std::vector<Vector> keys;
  Vector query;
  std::vector<Vector> pre_tanh_act;  // tanh(W1 k_i + W2 q), one per key
  Vector weights;
  bool valid = false;
};

struct AdditiveAttnResult {
  Vector context;
  Vector weights;
};

inline AdditiveAttnResult additive_attention(const AdditiveAttnParams& params,
                                             const std::vector<Vector>& keys, const Vector& query,
                                             AdditiveAttnCache* cache = nullptr) {
  if (keys.empty()) throw std::invalid_argument("additive_attention: empty keys");
  const std::size_t n = keys.size();

  Vector wq = matvec(params.w2.value, query);
  Vector scores(n);
  std::vector<Vector> acts(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector a = matvec(params.w1.value, keys[i]);
    axpy(1.0, wq, a);
    acts[i] = tanh_map(a);
    scores[i] = dot(params.v.value, acts[i]);
  }
  Vector weights = softmax(scores);

  Vector context(keys[0].dim());
  for (std::size_t i = 0; i < n; ++i) axpy(weights[i], keys[i], context);

  if (cache) {
    cache->keys = keys;
    cache->query = query;
    cache->pre_tanh_act = std::move(acts);
    cache->weights = weights;
    cache->valid = true;
  }
  return {std::move(context), std::move(weights)};
}

struct AdditiveAttnGrads {
  std::vector<Vector> d_keys;
  Vector d_query;
};

inline AdditiveAttnGrads additive_attention_backward(AdditiveAttnParams& params,
                                                     const AdditiveAttnCache& cache,
                                                     const Vector& d_context,
                                                     const Vector* d_weights = nullptr) {
  if (!cache.valid) throw StateError("additive_attention_backward: forward cache missing");
  const std::size_t n = cache.keys.size();

  Vector dw(n);
  std::vector<Vector> d_keys(n, Vector(cache.keys[0].dim()));
  for (std::size_t i = 0; i < n; ++i) {
    dw[i] = dot(d_context, cache.keys[i]);
    axpy(cache.weights[i], d_context, d_keys[i]);
  }
  if (d_weights) axpy(1.0, *d_weights, dw);

  Vector de = softmax_backward(cache.weights, dw);

  Vector d_query(cache.query.dim());
  for (std::size_t i = 0; i < n; ++i) {
    const Vector& t = cache.pre_tanh_act[i];
    axpy(de[i], t, params.v.grad);
    Vector da(t.dim());
    for (std::size_t k = 0; k < t.dim(); ++k)
      da[k] = de[i] * params.v.value[k] * (1.0 - t[k] * t[k]);
    add_outer(params.w1.grad, da, cache.keys[i]);
    add_outer(params.w2.grad, da, cache.query);
    add_matvec_t(params.w1.value, da, d_keys[i]);
    add_matvec_t(params.w2.value, da, d_query);
  }
  return {std::move(d_keys), std::move(d_query)};
}

// ---------------------------------------------------------------------------
// branch selection: s = W1 x1 + W2 x2; e_i = v . tanh(s + W3 x_i);
// fused = a_1 x1 + a_2 x2 with a = softmax(e). Optionally L2-normalizes the
// two inputs first (they live in different feature spaces).
// ---------------------------------------------------------------------------

struct BranchSelectionParams {
  VecParam v;
  MatParam w1, w2, w3;  // all attn_dim x feature_dim

  BranchSelectionParams() = default;
  BranchSelectionParams(const std::string& prefix, std::size_t attn_dim, std::size_t feat_dim)
      : v(prefix + ".v", Vector(attn_dim)),
        w1(prefix + ".w1", Matrix(attn_dim, feat_dim)),
        w2(prefix + ".w2", Matrix(attn_dim, feat_dim)),
        w3(prefix + ".w3", Matrix(attn_dim, feat_dim)) {}

  void init(Rng& rng) {
    glorot_uniform(w1.value, rng);
    glorot_uniform(w2.value, rng);
    glorot_uniform(w3.value, rng);
  }

  void collect(std::vector<ParamRef>& out) {
    out.push_back(make_ref(v));
    out.push_back(make_ref(w1));
    out.push_back(make_ref(w2));
    out.push_back(make_ref(w3));
  }
};

struct BranchSelectionCache {
  Vector x1, x2;        // post-normalization inputs
  double norm1 = 0.0, norm2 = 0.0;  // pre-normalization norms (0 when flag off)
  bool l2_normalized = false;
  Vector act1, act2;    // tanh activations
  Vector weights;       // 2 entries
  bool valid = false;
};

struct BranchSelectionResult {
  Vector fused;
  Vector weights;  // 2 entries
  Vector scores;   // pre-softmax e, 2 entries
};

inline BranchSelectionResult branch_selection(const BranchSelectionParams& params, const Vector& x1_in,
                                              const Vector& x2_in, bool l2_normalize_inputs,
                                              BranchSelectionCache* cache = nullptr) {
  require_same_dim(x1_in, x2_in, "branch_selection");
  Vector x1 = x1_in, x2 = x2_in;
  double n1 = 0.0, n2 = 0.0;
  if (l2_normalize_inputs) {
    n1 = l2_norm(x1);
    n2 = l2_norm(x2);
    if (n1 == 0.0 || n2 == 0.0)
      throw NormalizationError("branch_selection: cannot L2-normalize a zero input");
    x1 = scale(x1, 1.0 / n1);
    x2 = scale(x2, 1.0 / n2);
  }

  Vector s = matvec(params.w1.value, x1);
  add_matvec(params.w2.value, x2, s);

  Vector a1 = matvec(params.w3.value, x1);
  axpy(1.0, s, a1);
  Vector act1 = tanh_map(a1);
  Vector a2 = matvec(params.w3.value, x2);
  axpy(1.0, s, a2);
  Vector act2 = tanh_map(a2);

  Vector scores{dot(params.v.value, act1), dot(params.v.value, act2)};
  Vector weights = softmax(scores);

  Vector fused = scale(x1, weights[0]);
  axpy(weights[1], x2, fused);

  if (cache) {
    cache->x1 = x1;
    cache->x2 = x2;
    cache->norm1 = n1;
    cache->norm2 = n2;
    cache->l2_normalized = l2_normalize_inputs;
    cache->act1 = std::move(act1);
    cache->act2 = std::move(act2);
    cache->weights = weights;
    cache->valid = true;
  }
  return {std::move(fused), std::move(weights), std::move(scores)};
}

struct BranchSelectionGrads {
  Vector dx1, dx2;
};

inline BranchSelectionGrads branch_selection_backward(BranchSelectionParams& params,
                                                      const BranchSelectionCache& cache,
                                                      const Vector& d_fused,
                                                      const Vector* d_weights = nullptr) {
  if (!cache.valid) throw StateError("branch_selection_backward: forward cache missing");

  Vector dw{dot(d_fused, cache.x1), dot(d_fused, cache.x2)};
  if (d_weights) axpy(1.0, *d_weights, dw);
  Vector dx1 = scale(d_fused, cache.weights[0]);
  Vector dx2 = scale(d_fused, cache.weights[1]);

  Vector de = softmax_backward(cache.weights, dw);

  Vector ds(params.v.value.dim());
  const Vector* acts[2] = {&cache.act1, &cache.act2};
  Vector* dxs[2] = {&dx1, &dx2};
  const Vector* xs[2] = {&cache.x1, &cache.x2};
  for (int i = 0; i < 2; ++i) {
    const Vector& t = *acts[i];
    axpy(de[i], t, params.v.grad);
    Vector da(t.dim());
    for (std::size_t k = 0; k < t.dim(); ++k)
      da[k] = de[i] * params.v.value[k] * (1.0 - t[k] * t[k]);
    add_outer(params.w3.grad, da, *xs[i]);
    add_matvec_t(params.w3.value, da, *dxs[i]);
    axpy(1.0, da, ds);
  }
  add_outer(params.w1.grad, ds, cache.x1);
  add_outer(params.w2.grad, ds, cache.x2);
  add_matvec_t(params.w1.value, ds, dx1);
  add_matvec_t(params.w2.value, ds, dx2);

  if (cache.l2_normalized) {
    // y = x / |x|  =>  dx = (dy - y (y . dy)) / |x|
    auto through_norm = [](const Vector& y, const Vector& dy, double n) {
      Vector dx = dy;
      axpy(-dot(y, dy), y, dx);
      return scale(dx, 1.0 / n);
    };
    dx1 = through_norm(cache.x1, dx1, cache.norm1);
    dx2 = through_norm(cache.x2, dx2, cache.norm2);
  }
  return {std::move(dx1), std::move(dx2)};
}

// ---------------------------------------------------------------------------
// spatial attention: e_p = v . tanh(W1 q + W2 C_p) over the K*K positions of
// a feature map, softmax over all positions, pooled = sum_p a_p C_p.
// ---------------------------------------------------------------------------

struct SpatialAttnParams {
  VecParam v;
  MatParam w1, w2;  // attn_dim x query_dim, attn_dim x channels

  SpatialAttnParams() = default;
  SpatialAttnParams(const std::string& prefix, std::size_t attn_dim, std::size_t query_dim,
                    std::size_t channels)
      : v(prefix + ".v", Vector(attn_dim)),
        w1(prefix + ".w1", Matrix(attn_dim, query_dim)),
        w2(prefix + ".w2", Matrix(attn_dim, channels)) {}

  void init(Rng& rng) {
    glorot_uniform(w1.value, rng);
    glorot_uniform(w2.value, rng);
  }

  void collect(std::vector<ParamRef>& out) {
    out.push_back(make_ref(v));
    out.push_back(make_ref(w1));
    out.push_back(make_ref(w2));
  }
};

/// K x K grid of channel vectors; positions stored row-major.
struct SpatialFeatureMap {
  std::size_t k = 0;
  std::size_t channels = 0;
  std::vector<Vector> positions;  // k*k entries

  SpatialFeatureMap() = default;
  SpatialFeatureMap(std::size_t k_, std::size_t channels_)
      : k(k_), channels(channels_), positions(k_ * k_, Vector(channels_)) {}
};

struct SpatialAttnCache {
  std::vector<Vector> positions;
  Vector query;
  std::vector<Vector> acts;
  Vector weights;  // flat, k*k
  Vector scores;   // flat pre-softmax
  bool valid = false;
};

struct SpatialAttnResult {
  Vector pooled;
  Matrix weights;  // K x K
  Vector scores;   // flat pre-softmax, k*k
};

inline SpatialAttnResult spatial_attention(const SpatialAttnParams& params,
                                           const SpatialFeatureMap& map, const Vector& query,
                                           SpatialAttnCache* cache = nullptr) {
  if (map.k == 0) throw std::invalid_argument("spatial_attention: K must be positive");
  const std::size_t n = map.k * map.k;
  if (map.positions.size() != n)
    throw DimensionError("spatial_attention: expected " + std::to_string(n) + " positions, got " +
                         std::to_string(map.positions.size()));

  Vector wq = matvec(params.w1.value, query);
  Vector scores(n);
  std::vector<Vector> acts(n);
  for (std::size_t p = 0; p < n; ++p) {
    Vector a = matvec(params.w2.value, map.positions[p]);
    axpy(1.0, wq, a);
    acts[p] = tanh_map(a);
    scores[p] = dot(params.v.value, acts[p]);
  }
  Vector weights = softmax(scores);

  Vector pooled(map.channels);
  for (std::size_t p = 0; p < n; ++p) axpy(weights[p], map.positions[p], pooled);

  Matrix wgrid(map.k, map.k);
  for (std::size_t p = 0; p < n; ++p) wgrid.data()[p] = weights[p];

  if (cache) {
    cache->positions = map.positions;
    cache->query = query;
    cache->acts = std::move(acts);
    cache->weights = weights;
    cache->scores = scores;
    cache->valid = true;
  }
  return {std::move(pooled), std::move(wgrid), std::move(scores)};
}

struct SpatialAttnGrads {
  std::vector<Vector> d_positions;
  Vector d_query;
};

inline SpatialAttnGrads spatial_attention_backward(SpatialAttnParams& params,
                                                   const SpatialAttnCache& cache,
                                                   const Vector& d_pooled,
                                                   const Vector* d_weights = nullptr) {
  if (!cache.valid) throw StateError("spatial_attention_backward: forward cache missing");
  const std::size_t n = cache.positions.size();

  Vector dw(n);
  std::vector<Vector> d_pos(n, Vector(cache.positions[0].dim()));
  for (std::size_t p = 0; p < n; ++p) {
    dw[p] = dot(d_pooled, cache.positions[p]);
    axpy(cache.weights[p], d_pooled, d_pos[p]);
  }
  if (d_weights) axpy(1.0, *d_weights, dw);

  Vector de = softmax_backward(cache.weights, dw);

  Vector d_query(cache.query.dim());
  for (std::size_t p = 0; p < n; ++p) {
    const Vector& t = cache.acts[p];
    axpy(de[p], t, params.v.grad);
    Vector da(t.dim());
    for (std::size_t k = 0; k < t.dim(); ++k)
      da[k] = de[p] * params.v.value[k] * (1.0 - t[k] * t[k]);
    add_outer(params.w2.grad, da, cache.positions[p]);
    add_outer(params.w1.grad, da, cache.query);
    add_matvec_t(params.w2.value, da, d_pos[p]);
    add_matvec_t(params.w1.value, da, d_query);
  }
  return {std::move(d_pos), std::move(d_query)};
}

// ---------------------------------------------------------------------------
// jna: cross-stream temporal attention between the spatial-branch states
// h_1..h_T and temporal-branch states g_1..g_T.
//
//   e(i,j) = v . tanh(W1 h_i + W2 g_j)        score of frame h_i for query g_j
//   f(j,i) = u . tanh(W3 g_j + W4 h_i)        score of frame g_j for query h_i
//   alpha(i,j) = softmax over i of e(.,j)     columns sum to 1
//   beta(i,j)  = softmax over j of f(j,i)     rows sum to 1
//   o_h[j] = sum_i alpha(i,j) h_i             one output per g query
//   o_g[i] = sum_j beta(i,j) g_j              one output per h query
//
// Both weight families normalize over the averaged (candidate) axis, so every
// output is a convex combination of the frames it averages. alpha and beta
// are the sharing gates: the only coupling between the two branches.
// ---------------------------------------------------------------------------

struct JnaParams {
  VecParam v, u;
  MatParam w1, w2, w3, w4;  // w1,w4: attn x dim_h; w2,w3: attn x dim_g

  JnaParams() = default;
  JnaParams(const std::string& prefix, std::size_t attn_dim, std::size_t dim_h, std::size_t dim_g)
      : v(prefix + ".v", Vector(attn_dim)),
        u(prefix + ".u", Vector(attn_dim)),
        w1(prefix + ".w1", Matrix(attn_dim, dim_h)),
        w2(prefix + ".w2", Matrix(attn_dim, dim_g)),
        w3(prefix + ".w3", Matrix(attn_dim, dim_g)),
        w4(prefix + ".w4", Matrix(attn_dim, dim_h)) {}

  void init(Rng& rng) {
    glorot_uniform(w1.value, rng);
    glorot_uniform(w2.value, rng);
    glorot_uniform(w3.value, rng);
    glorot_uniform(w4.value, rng);
  }

  void collect(std::vector<ParamRef>& out) {
    out.push_back(make_ref(v));
    out.push_back(make_ref(u));
    out.push_back(make_ref(w1));
    out.push_back(make_ref(w2));
    out.push_back(make_ref(w3));
    out.push_back(make_ref(w4));
  }
};

/// Pre-softmax score matrices and post-softmax gate weights for one sequence.
/// For the jna mechanism all four are T x T:
///   e(i,j): h-frame rows, g-query columns; alpha likewise, columns sum to 1.
///   f(j,i): g-frame rows, h-query columns.
///   beta(i,j): h-query rows, g-candidate columns; rows sum to 1.
/// Other mechanisms populate a subset (see model.hpp).
struct AttentionTrace {
  std::string mechanism;
  Matrix e, f, alpha, beta;
};

struct JnaCache {
  std::vector<Vector> h, g;
  std::vector<Vector> act_e;  // tanh(W1 h_i + W2 g_j), index i*T + j
  std::vector<Vector> act_f;  // tanh(W3 g_j + W4 h_i), index j*T + i
  Matrix alpha, beta;
  bool valid = false;
};

struct JnaResult {
  std::vector<Vector> o_h;  // T outputs for the spatial branch
  std::vector<Vector> o_g;  // T outputs for the temporal branch
  AttentionTrace trace;
};

inline JnaResult jna_forward(const JnaParams& params, const HiddenSequence& h,
                             const HiddenSequence& g, JnaCache* cache = nullptr) {
  if (h.empty()) throw std::invalid_argument("jna_forward: empty sequences");
  if (h.size() != g.size())
    throw std::invalid_argument("jna_forward: sequence lengths differ, " +
                                std::to_string(h.size()) + " vs " + std::to_string(g.size()));
  const std::size_t T = h.size();
  if (h[0].dim() != params.w1.value.cols())
    throw DimensionError("jna_forward: h dim " + std::to_string(h[0].dim()) + " vs W1 " +
                         shape_str(params.w1.value));
  if (g[0].dim() != params.w2.value.cols())
    throw DimensionError("jna_forward: g dim " + std::to_string(g[0].dim()) + " vs W2 " +
                         shape_str(params.w2.value));

  std::vector<Vector> w1h(T), w4h(T), w2g(T), w3g(T);
  for (std::size_t i = 0; i < T; ++i) {
    w1h[i] = matvec(params.w1.value, h[i]);
    w4h[i] = matvec(params.w4.value, h[i]);
  }
  for (std::size_t j = 0; j < T; ++j) {
    w2g[j] = matvec(params.w2.value, g[j]);
    w3g[j] = matvec(params.w3.value, g[j]);
  }

  Matrix e(T, T), f(T, T);
  std::vector<Vector> act_e(T * T), act_f(T * T);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      Vector te = tanh_map(add(w1h[i], w2g[j]));
      e(i, j) = dot(params.v.value, te);
      act_e[i * T + j] = std::move(te);
    }
  }
  for (std::size_t j = 0; j < T; ++j) {
    for (std::size_t i = 0; i < T; ++i) {
      Vector tf = tanh_map(add(w3g[j], w4h[i]));
      f(j, i) = dot(params.u.value, tf);
      act_f[j * T + i] = std::move(tf);
    }
  }

  // alpha: softmax down each column of e.
  Matrix alpha(T, T);
  for (std::size_t j = 0; j < T; ++j) {
    Vector col(T);
    for (std::size_t i = 0; i < T; ++i) col[i] = e(i, j);
    Vector w = softmax(col);
    for (std::size_t i = 0; i < T; ++i) alpha(i, j) = w[i];
  }
  // beta(i,j): softmax over the g axis of f(.,i).
  Matrix beta(T, T);
  for (std::size_t i = 0; i < T; ++i) {
    Vector row(T);
    for (std::size_t j = 0; j < T; ++j) row[j] = f(j, i);
    Vector w = softmax(row);
    for (std::size_t j = 0; j < T; ++j) beta(i, j) = w[j];
  }

  std::vector<Vector> o_h(T, Vector(h[0].dim())), o_g(T, Vector(g[0].dim()));
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t i = 0; i < T; ++i) axpy(alpha(i, j), h[i], o_h[j]);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j) axpy(beta(i, j), g[j], o_g[i]);

  if (cache) {
    cache->h = h;
    cache->g = g;
    cache->act_e = std::move(act_e);
    cache->act_f = std::move(act_f);
    cache->alpha = alpha;
    cache->beta = beta;
    cache->valid = true;
  }

  AttentionTrace trace{"jna", std::move(e), std::move(f), std::move(alpha), std::move(beta)};
  return {std::move(o_h), std::move(o_g), std::move(trace)};
}

struct JnaInputGrads {
  std::vector<Vector> dh, dg;
};

inline JnaInputGrads jna_backward(JnaParams& params, const JnaCache& cache,
                                  const std::vector<Vector>& d_oh,
                                  const std::vector<Vector>& d_og) {
  if (!cache.valid) throw StateError("jna_backward: forward cache missing");
  const std::size_t T = cache.h.size();
  if (d_oh.size() != T || d_og.size() != T)
    throw DimensionError("jna_backward: upstream lengths must equal T");

  const std::size_t dim_h = cache.h[0].dim();
  const std::size_t dim_g = cache.g[0].dim();
  const std::size_t ad = params.v.value.dim();

  std::vector<Vector> dh(T, Vector(dim_h)), dg(T, Vector(dim_g));

  // Through the weighted sums.
  Matrix dalpha(T, T), dbeta(T, T);
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t i = 0; i < T; ++i) {
      dalpha(i, j) = dot(d_oh[j], cache.h[i]);
      axpy(cache.alpha(i, j), d_oh[j], dh[i]);
    }
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j) {
      dbeta(i, j) = dot(d_og[i], cache.g[j]);
      axpy(cache.beta(i, j), d_og[i], dg[j]);
    }

  // Softmax backward: alpha per column, beta per row.
  Matrix de(T, T), dft(T, T);  // dft(i,j) = dL/df(j,i)
  for (std::size_t j = 0; j < T; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < T; ++k) s += cache.alpha(k, j) * dalpha(k, j);
    for (std::size_t i = 0; i < T; ++i) de(i, j) = cache.alpha(i, j) * (dalpha(i, j) - s);
  }
  for (std::size_t i = 0; i < T; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < T; ++k) s += cache.beta(i, k) * dbeta(i, k);
    for (std::size_t j = 0; j < T; ++j) dft(i, j) = cache.beta(i, j) * (dbeta(i, j) - s);
  }

  // e path. Row/column sums of the per-pair pre-activation grads let the
  // rank-1 parameter updates run once per frame instead of once per pair.
  std::vector<Vector> row_e(T, Vector(ad)), col_e(T, Vector(ad));
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      const Vector& t = cache.act_e[i * T + j];
      double g = de(i, j);
      axpy(g, t, params.v.grad);
      for (std::size_t k = 0; k < ad; ++k) {
        double da = g * params.v.value[k] * (1.0 - t[k] * t[k]);
        row_e[i][k] += da;
        col_e[j][k] += da;
      }
    }
  }
  for (std::size_t i = 0; i < T; ++i) {
    add_outer(params.w1.grad, row_e[i], cache.h[i]);
    add_matvec_t(params.w1.value, row_e[i], dh[i]);
  }
  for (std::size_t j = 0; j < T; ++j) {
    add_outer(params.w2.grad, col_e[j], cache.g[j]);
    add_matvec_t(params.w2.value, col_e[j], dg[j]);
  }

  // f path.
  std::vector<Vector> row_f(T, Vector(ad)), col_f(T, Vector(ad));
  for (std::size_t j = 0; j < T; ++j) {
    for (std::size_t i = 0; i < T; ++i) {
      const Vector& t = cache.act_f[j * T + i];
      double g = dft(i, j);
      axpy(g, t, params.u.grad);
      for (std::size_t k = 0; k < ad; ++k) {
        double da = g * params.u.value[k] * (1.0 - t[k] * t[k]);
        row_f[j][k] += da;
        col_f[i][k] += da;
      }
    }
  }
  for (std::size_t j = 0; j < T; ++j) {
    add_outer(params.w3.grad, row_f[j], cache.g[j]);
    add_matvec_t(params.w3.value, row_f[j], dg[j]);
  }
  for (std::size_t i = 0; i < T; ++i) {
    add_outer(params.w4.grad, col_f[i], cache.h[i]);
    add_matvec_t(params.w4.value, col_f[i], dh[i]);
  }

  return {std::move(dh), std::move(dg)};
}

// ---------------------------------------------------------------------------
// gate statistics
// ---------------------------------------------------------------------------

struct GateConcentration {
  double entropy_alpha = 0.0;
  double entropy_beta = 0.0;
  double effective_support = 0.0;  // mean exp(entropy) over all gate distributions
};

/// Shannon entropy of each alpha column and beta row; exp(entropy) is the
/// effective number of frames a gate attends to (T when uniform, 1 when
/// one-hot).
inline GateConcentration gate_concentration(const AttentionTrace& trace) {
  const Matrix& a = trace.alpha;
  const Matrix& b = trace.beta;
  if (a.rows() == 0 || a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw std::invalid_argument("gate_concentration: expected square T x T gate matrices");
  const std::size_t T = a.rows();

  auto entropy = [](const Vector& w) {
    double hsum = 0.0;
    for (double p : w)
      if (p > 0.0) hsum -= p * std::log(p);
    return hsum;
  };

  GateConcentration out;
  double support = 0.0;
  for (std::size_t j = 0; j < T; ++j) {
    Vector col(T);
    for (std::size_t i = 0; i < T; ++i) col[i] = a(i, j);
    double hcol = entropy(col);
    out.entropy_alpha += hcol;
    support += std::exp(hcol);
  }
  for (std::size_t i = 0; i < T; ++i) {
    Vector row(T);
    for (std::size_t j = 0; j < T; ++j) row[j] = b(i, j);
    double hrow = entropy(row);
    out.entropy_beta += hrow;
    support += std::exp(hrow);
  }
  out.entropy_alpha /= static_cast<double>(T);
  out.entropy_beta /= static_cast<double>(T);
  out.effective_support = support / static_cast<double>(2 * T);
  return out;
}

}  // namespace jna
