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

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "jna/matrix.hpp"

namespace jna {

/// -ln(scores[label]) for an already-normalized score vector.
inline double cross_entropy(const Vector& scores, std::size_t label) {
  if (label >= scores.dim())
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(scores.dim()) + " classes");
  return -std::log(scores[label]);
}

/// Numerically stable cross-entropy straight from logits via log-sum-exp.
/// When dlogits is given it receives softmax(logits) - onehot(label).
inline double cross_entropy_from_logits(const Vector& logits, std::size_t label,
                                        Vector* dlogits = nullptr) {
  if (logits.empty()) throw std::invalid_argument("cross_entropy_from_logits: empty logits");
  if (label >= logits.dim())
    throw std::invalid_argument("cross_entropy_from_logits: label out of range");
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v - m);
  double lse = m + std::log(denom);
  if (dlogits) {
    Vector d(logits.dim());
    for (std::size_t i = 0; i < logits.dim(); ++i) d[i] = std::exp(logits[i] - m) / denom;
    d[label] -= 1.0;
    *dlogits = std::move(d);
  }
  return lse - logits[label];
}

}  // namespace jna
