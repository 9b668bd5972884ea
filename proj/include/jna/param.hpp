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

/// Named learnable parameters. Each parameter carries a value plus a
/// gradient and a momentum buffer of identical shape. The optimizer, the
/// gradient checker and checkpoint I/O all work on flat ParamRef views so
/// they stay agnostic of the concrete shape.

#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jna/matrix.hpp"
#include "jna/rng.hpp"

namespace jna {

namespace detail {
inline Matrix zeros_like(const Matrix& m) { return Matrix(m.rows(), m.cols()); }
inline Vector zeros_like(const Vector& v) { return Vector(v.dim()); }
}  // namespace detail

template <typename T>
struct ParamT {
  std::string name;
  T value;
  T grad;
  T momentum;

  ParamT() = default;
  ParamT(std::string n, T init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(detail::zeros_like(value)),
        momentum(detail::zeros_like(value)) {}
};

using MatParam = ParamT<Matrix>;
using VecParam = ParamT<Vector>;

/// Flat, type-erased view of one parameter.
struct ParamRef {
  std::string name;
  std::vector<std::size_t> shape;  // {rows, cols} or {dim}
  std::span<double> value;
  std::span<double> grad;
  std::span<double> momentum;
};

inline ParamRef make_ref(MatParam& p) {
  return {p.name, {p.value.rows(), p.value.cols()}, p.value.span(), p.grad.span(), p.momentum.span()};
}

inline ParamRef make_ref(VecParam& p) {
  return {p.name, {p.value.dim()}, p.value.span(), p.grad.span(), p.momentum.span()};
}

inline void zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& p : params)
    for (double& g : p.grad) g = 0.0;
}

inline void zero_momentum(const std::vector<ParamRef>& params) {
  for (const auto& p : params)
    for (double& m : p.momentum) m = 0.0;
}

/// Heavy-ball SGD: buf <- momentum*buf + grad; value <- value - lr*buf.
/// Gradients are left untouched; call zero_grads before the next batch.
inline void sgd_momentum_step(const std::vector<ParamRef>& params, double lr, double momentum) {
  if (lr <= 0.0) throw ConfigError("sgd_momentum_step: lr must be positive, got " + std::to_string(lr));
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      p.momentum[i] = momentum * p.momentum[i] + p.grad[i];
      p.value[i] -= lr * p.momentum[i];
    }
  }
}

/// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); fan_in = cols,
/// fan_out = rows for a weight applied as W*x.
inline void glorot_uniform(Matrix& w, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (double& v : w.span()) v = rng.uniform(-a, a);
}

inline double grad_sq_norm(const std::vector<ParamRef>& params) {
  double s = 0.0;
  for (const auto& p : params)
    for (double g : p.grad) s += g * g;
  return s;
}

}  // namespace jna
