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

/// GRU cell and stacked sequence encoder with hand-written BPTT.
///
/// Gate equations (update z, reset r, candidate h~):
///   z  = sigmoid(W_z x + U_z h_prev + b_z)
///   r  = sigmoid(W_r x + U_r h_prev + b_r)
///   h~ = tanh(W_h x + U_h (r . h_prev) + b_h)
///   h  = (1 - z) . h_prev + z . h~
/// The initial hidden state is the zero vector.

#pragma once

#include <string>
#include <vector>

#include "jna/matrix.hpp"
#include "jna/param.hpp"

namespace jna {

/// Hidden states h_1..h_T of one layer.
using HiddenSequence = std::vector<Vector>;

/// One observation sequence: T rows of D-dimensional features.
using FeatureSequence = Matrix;

struct GruCell {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  MatParam w_z, u_z;
  VecParam b_z;
  MatParam w_r, u_r;
  VecParam b_r;
  MatParam w_h, u_h;
  VecParam b_h;

  GruCell() = default;
  GruCell(const std::string& prefix, std::size_t in_dim, std::size_t hid_dim)
      : input_dim(in_dim),
        hidden_dim(hid_dim),
        w_z(prefix + ".w_z", Matrix(hid_dim, in_dim)),
        u_z(prefix + ".u_z", Matrix(hid_dim, hid_dim)),
        b_z(prefix + ".b_z", Vector(hid_dim)),
        w_r(prefix + ".w_r", Matrix(hid_dim, in_dim)),
        u_r(prefix + ".u_r", Matrix(hid_dim, hid_dim)),
        b_r(prefix + ".b_r", Vector(hid_dim)),
        w_h(prefix + ".w_h", Matrix(hid_dim, in_dim)),
        u_h(prefix + ".u_h", Matrix(hid_dim, hid_dim)),
        b_h(prefix + ".b_h", Vector(hid_dim)) {}

  /// Glorot for weight matrices, zeros for biases. Draw order is fixed.
  void init(Rng& rng) {
    glorot_uniform(w_z.value, rng);
    glorot_uniform(u_z.value, rng);
    glorot_uniform(w_r.value, rng);
    glorot_uniform(u_r.value, rng);
    glorot_uniform(w_h.value, rng);
    glorot_uniform(u_h.value, rng);
  }

  void collect(std::vector<ParamRef>& out) {
    out.push_back(make_ref(w_z));
    out.push_back(make_ref(u_z));
    out.push_back(make_ref(b_z));
    out.push_back(make_ref(w_r));
    out.push_back(make_ref(u_r));
    out.push_back(make_ref(b_r));
    out.push_back(make_ref(w_h));
    out.push_back(make_ref(u_h));
    out.push_back(make_ref(b_h));
  }
};

struct GruStepCache {
  Vector x, h_prev, z, r, rh, h_tilde, h;
};

inline Vector gru_step(const GruCell& cell, const Vector& x, const Vector& h_prev,
                       GruStepCache* cache = nullptr) {
  if (x.dim() != cell.input_dim)
    throw DimensionError("gru_step: input dim " + std::to_string(x.dim()) + " vs cell " +
                         std::to_string(cell.input_dim));
  if (h_prev.dim() != cell.hidden_dim)
    throw DimensionError("gru_step: hidden dim " + std::to_string(h_prev.dim()) + " vs cell " +
                         std::to_string(cell.hidden_dim));

  Vector az = matvec(cell.w_z.value, x);
  add_matvec(cell.u_z.value, h_prev, az);
  axpy(1.0, cell.b_z.value, az);
  Vector z = sigmoid_map(az);

  Vector ar = matvec(cell.w_r.value, x);
  add_matvec(cell.u_r.value, h_prev, ar);
  axpy(1.0, cell.b_r.value, ar);
  Vector r = sigmoid_map(ar);

  Vector rh = hadamard(r, h_prev);
  Vector ah = matvec(cell.w_h.value, x);
  add_matvec(cell.u_h.value, rh, ah);
  axpy(1.0, cell.b_h.value, ah);
  Vector h_tilde = tanh_map(ah);

  Vector h(cell.hidden_dim);
  for (std::size_t i = 0; i < cell.hidden_dim; ++i)
    h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * h_tilde[i];

  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->rh = std::move(rh);
    cache->h_tilde = std::move(h_tilde);
    cache->h = h;
  }
  return h;
}

struct GruStepGrads {
  Vector dx, dh_prev;
};

/// Backward through one step. Accumulates parameter gradients into the cell
/// and returns gradients for the step inputs.
inline GruStepGrads gru_step_backward(GruCell& cell, const GruStepCache& cache, const Vector& dh) {
  const std::size_t hd = cell.hidden_dim;
  if (dh.dim() != hd) throw DimensionError("gru_step_backward: upstream dim mismatch");
  if (cache.h.dim() != hd) throw StateError("gru_step_backward: cache not populated");

  Vector dh_tilde(hd), dz(hd), dh_prev(hd);
  for (std::size_t i = 0; i < hd; ++i) {
    dh_tilde[i] = dh[i] * cache.z[i];
    dz[i] = dh[i] * (cache.h_tilde[i] - cache.h_prev[i]);
    dh_prev[i] = dh[i] * (1.0 - cache.z[i]);
  }

  // candidate path
  Vector da_h(hd);
  for (std::size_t i = 0; i < hd; ++i)
    da_h[i] = dh_tilde[i] * (1.0 - cache.h_tilde[i] * cache.h_tilde[i]);
  add_outer(cell.w_h.grad, da_h, cache.x);
  add_outer(cell.u_h.grad, da_h, cache.rh);
  axpy(1.0, da_h, cell.b_h.grad);
  Vector dx = matvec_t(cell.w_h.value, da_h);
  Vector drh = matvec_t(cell.u_h.value, da_h);
  Vector dr = hadamard(drh, cache.h_prev);
  for (std::size_t i = 0; i < hd; ++i) dh_prev[i] += drh[i] * cache.r[i];

  // update gate
  Vector da_z(hd);
  for (std::size_t i = 0; i < hd; ++i) da_z[i] = dz[i] * cache.z[i] * (1.0 - cache.z[i]);
  add_outer(cell.w_z.grad, da_z, cache.x);
  add_outer(cell.u_z.grad, da_z, cache.h_prev);
  axpy(1.0, da_z, cell.b_z.grad);
  add_matvec_t(cell.w_z.value, da_z, dx);
  add_matvec_t(cell.u_z.value, da_z, dh_prev);

  // reset gate
  Vector da_r(hd);
  for (std::size_t i = 0; i < hd; ++i) da_r[i] = dr[i] * cache.r[i] * (1.0 - cache.r[i]);
  add_outer(cell.w_r.grad, da_r, cache.x);
  add_outer(cell.u_r.grad, da_r, cache.h_prev);
  axpy(1.0, da_r, cell.b_r.grad);
  add_matvec_t(cell.w_r.value, da_r, dx);
  add_matvec_t(cell.u_r.value, da_r, dh_prev);

  return {std::move(dx), std::move(dh_prev)};
}

struct EncodeCache {
  // steps[layer][t]
  std::vector<std::vector<GruStepCache>> steps;
  bool empty() const { return steps.empty(); }
};

/// Runs the stacked encoder over a T x D sequence and returns the last
/// layer's states h_1..h_T.
inline HiddenSequence encode_sequence(std::span<const GruCell> cells, const FeatureSequence& seq,
                                      EncodeCache* cache = nullptr) {
  if (cells.empty()) throw std::invalid_argument("encode_sequence: no layers");
  if (seq.rows() == 0) throw std::invalid_argument("encode_sequence: empty sequence");
  if (seq.cols() != cells[0].input_dim)
    throw DimensionError("encode_sequence: feature dim " + std::to_string(seq.cols()) +
                         " vs layer-0 input " + std::to_string(cells[0].input_dim));
  for (std::size_t l = 1; l < cells.size(); ++l)
    if (cells[l].input_dim != cells[l - 1].hidden_dim)
      throw DimensionError("encode_sequence: layer dims do not chain at layer " + std::to_string(l));

  const std::size_t T = seq.rows();
  if (cache) {
    cache->steps.assign(cells.size(), {});
    for (auto& layer : cache->steps) layer.resize(T);
  }

  HiddenSequence states(T);
  for (std::size_t t = 0; t < T; ++t) states[t] = seq.row_vec(t);

  for (std::size_t l = 0; l < cells.size(); ++l) {
    Vector h(cells[l].hidden_dim);
    for (std::size_t t = 0; t < T; ++t) {
      h = gru_step(cells[l], states[t], h, cache ? &cache->steps[l][t] : nullptr);
      states[t] = h;
    }
  }
  return states;
}

/// BPTT through the stacked encoder. `upstream[t]` is dL/dh_t for the last
/// layer. Parameter gradients accumulate into the cells; the return value is
/// dL/d(input sequence), shaped like the original T x D input.
inline Matrix encode_backward(std::span<GruCell> cells, const EncodeCache& cache,
                              const std::vector<Vector>& upstream) {
  if (cache.empty() || cache.steps.size() != cells.size())
    throw StateError("encode_backward: forward cache missing");
  const std::size_t T = cache.steps[0].size();
  if (upstream.size() != T) throw DimensionError("encode_backward: upstream length mismatch");

  std::vector<Vector> dout(upstream);
  for (std::size_t li = cells.size(); li-- > 0;) {
    GruCell& cell = cells[li];
    std::vector<Vector> dinput(T, Vector(cell.input_dim));
    Vector carry(cell.hidden_dim);
    for (std::size_t t = T; t-- > 0;) {
      Vector dh = add(dout[t], carry);
      auto grads = gru_step_backward(cell, cache.steps[li][t], dh);
      dinput[t] = std::move(grads.dx);
      carry = std::move(grads.dh_prev);
    }
    dout = std::move(dinput);
  }

  Matrix dseq(T, cells[0].input_dim);
  for (std::size_t t = 0; t < T; ++t) dseq.set_row(t, dout[t]);
  return dseq;
}

}  // namespace jna
