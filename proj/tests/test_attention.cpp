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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "jna/attention.hpp"
#include "jna/gradcheck.hpp"

using namespace jna;

namespace {

void randomize(std::vector<ParamRef> refs, Rng& rng, double lo = -0.8, double hi = 0.8) {
  for (auto& p : refs)
    for (double& v : p.value) v = rng.uniform(lo, hi);
}

template <class Params>
void randomize_params(Params& p, Rng& rng, double lo = -0.8, double hi = 0.8) {
  std::vector<ParamRef> refs;
  p.collect(refs);
  randomize(refs, rng, lo, hi);
}

Vector rand_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// direct scalar evaluation of e_i = v . tanh(W1 k_i + W2 q), softmax, sum
struct AdditiveOracle {
  Vector weights, context;
};
AdditiveOracle additive_oracle(const AdditiveAttnParams& p, const std::vector<Vector>& keys,
                               const Vector& q) {
  const std::size_t n = keys.size(), ad = p.v.value.dim();
  Vector e(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < ad; ++k) {
      double a = 0.0;
      for (std::size_t j = 0; j < keys[i].dim(); ++j) a += p.w1.value(k, j) * keys[i][j];
      for (std::size_t j = 0; j < q.dim(); ++j) a += p.w2.value(k, j) * q[j];
      s += p.v.value[k] * std::tanh(a);
    }
    e[i] = s;
  }
  double denom = 0.0;
  Vector w(n);
  for (std::size_t i = 0; i < n; ++i) denom += std::exp(e[i]);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(e[i]) / denom;
  Vector ctx(keys[0].dim());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < ctx.dim(); ++j) ctx[j] += w[i] * keys[i][j];
  return {w, ctx};
}

// direct double-loop evaluation of the six cross-stream equations
struct JnaOracle {
  Matrix e, f, alpha, beta;
  std::vector<Vector> o_h, o_g;
};
JnaOracle jna_oracle(const JnaParams& p, const HiddenSequence& h, const HiddenSequence& g) {
  const std::size_t T = h.size(), ad = p.v.value.dim();
  JnaOracle o;
  o.e = Matrix(T, T);
  o.f = Matrix(T, T);
  auto score = [&](const Matrix& wa, const Vector& a, const Matrix& wb, const Vector& b,
                   const Vector& vv) {
    double s = 0.0;
    for (std::size_t k = 0; k < ad; ++k) {
      double act = 0.0;
      for (std::size_t j = 0; j < a.dim(); ++j) act += wa(k, j) * a[j];
      for (std::size_t j = 0; j < b.dim(); ++j) act += wb(k, j) * b[j];
      s += vv[k] * std::tanh(act);
    }
    return s;
  };
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j)
      o.e(i, j) = score(p.w1.value, h[i], p.w2.value, g[j], p.v.value);
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t i = 0; i < T; ++i)
      o.f(j, i) = score(p.w3.value, g[j], p.w4.value, h[i], p.u.value);

  o.alpha = Matrix(T, T);
  for (std::size_t j = 0; j < T; ++j) {
    double denom = 0.0;
    for (std::size_t k = 0; k < T; ++k) denom += std::exp(o.e(k, j));
    for (std::size_t i = 0; i < T; ++i) o.alpha(i, j) = std::exp(o.e(i, j)) / denom;
  }
  o.beta = Matrix(T, T);
  for (std::size_t i = 0; i < T; ++i) {
    double denom = 0.0;
    for (std::size_t k = 0; k < T; ++k) denom += std::exp(o.f(k, i));
    for (std::size_t j = 0; j < T; ++j) o.beta(i, j) = std::exp(o.f(j, i)) / denom;
  }
  o.o_h.assign(T, Vector(h[0].dim()));
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t d = 0; d < h[0].dim(); ++d) o.o_h[j][d] += o.alpha(i, j) * h[i][d];
  o.o_g.assign(T, Vector(g[0].dim()));
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j)
      for (std::size_t d = 0; d < g[0].dim(); ++d) o.o_g[i][d] += o.beta(i, j) * g[j][d];
  return o;
}

}  // namespace

// ---- additive attention ----

TEST_CASE("additive attention: single key gets weight 1") {
  Rng rng(101);
  AdditiveAttnParams p("a", 3, 2, 2);
  randomize_params(p, rng);
  Vector key{0.4, -1.0};
  auto r = additive_attention(p, {key}, Vector{0.1, 0.2});
  REQUIRE(r.weights.dim() == 1);
  CHECK(r.weights[0] == 1.0);
  CHECK(r.context[0] == key[0]);
  CHECK(r.context[1] == key[1]);
}

TEST_CASE("additive attention: zero v gives uniform weights and the key mean") {
  Rng rng(103);
  AdditiveAttnParams p("a", 3, 2, 2);
  randomize_params(p, rng);
  p.v.value.fill(0.0);
  std::vector<Vector> keys{{1.0, 0.0}, {0.0, 1.0}, {2.0, 2.0}, {-1.0, 3.0}};
  auto r = additive_attention(p, keys, Vector{0.3, -0.3});
  for (std::size_t i = 0; i < 4; ++i)
    CHECK_THAT(r.weights[i], Catch::Matchers::WithinAbs(0.25, 1e-15));
  CHECK_THAT(r.context[0], Catch::Matchers::WithinAbs(0.5, 1e-15));
  CHECK_THAT(r.context[1], Catch::Matchers::WithinAbs(1.5, 1e-15));
}

TEST_CASE("additive attention matches the formula oracle") {
  Rng rng(107);
  for (int trial = 0; trial < 10; ++trial) {
    AdditiveAttnParams p("a", 3, 3, 2);
    randomize_params(p, rng);
    std::vector<Vector> keys{rand_vec(rng, 3), rand_vec(rng, 3), rand_vec(rng, 3)};
    Vector q = rand_vec(rng, 2);
    auto got = additive_attention(p, keys, q);
    auto want = additive_oracle(p, keys, q);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK_THAT(got.weights[i], Catch::Matchers::WithinAbs(want.weights[i], 1e-13));
    for (std::size_t d = 0; d < 3; ++d)
      CHECK_THAT(got.context[d], Catch::Matchers::WithinAbs(want.context[d], 1e-13));
  }
}

TEST_CASE("additive attention rejects empty keys and missing cache") {
  AdditiveAttnParams p("a", 2, 2, 2);
  CHECK_THROWS_AS(additive_attention(p, {}, Vector(2)), std::invalid_argument);
  AdditiveAttnCache cache;
  CHECK_THROWS_AS(additive_attention_backward(p, cache, Vector(2)), StateError);
}

// ---- branch selection ----

TEST_CASE("branch selection: identical inputs split evenly") {
  Rng rng(109);
  BranchSelectionParams p("b", 3, 4);
  randomize_params(p, rng);
  Vector x = rand_vec(rng, 4);
  auto r = branch_selection(p, x, x, false);
  CHECK_THAT(r.weights[0], Catch::Matchers::WithinAbs(0.5, 1e-15));
  CHECK_THAT(r.weights[1], Catch::Matchers::WithinAbs(0.5, 1e-15));
  for (std::size_t d = 0; d < 4; ++d)
    CHECK_THAT(r.fused[d], Catch::Matchers::WithinAbs(x[d], 1e-15));
}

TEST_CASE("branch selection matches the formula oracle") {
  Rng rng(113);
  for (int trial = 0; trial < 10; ++trial) {
    const bool l2 = trial % 2 == 1;
    BranchSelectionParams p("b", 2, 3);
    randomize_params(p, rng);
    Vector x1 = rand_vec(rng, 3, 0.2, 1.0), x2 = rand_vec(rng, 3, -1.0, -0.2);
    auto got = branch_selection(p, x1, x2, l2);

    Vector n1 = l2 ? l2_normalize(x1) : x1;
    Vector n2 = l2 ? l2_normalize(x2) : x2;
    Vector s = add(matvec(p.w1.value, n1), matvec(p.w2.value, n2));
    double e1 = dot(p.v.value, tanh_map(add(s, matvec(p.w3.value, n1))));
    double e2 = dot(p.v.value, tanh_map(add(s, matvec(p.w3.value, n2))));
    double a1 = std::exp(e1) / (std::exp(e1) + std::exp(e2));
    for (std::size_t d = 0; d < 3; ++d)
      CHECK_THAT(got.fused[d],
                 Catch::Matchers::WithinAbs(a1 * n1[d] + (1.0 - a1) * n2[d], 1e-12));
    CHECK_THAT(got.weights[0], Catch::Matchers::WithinAbs(a1, 1e-12));
  }
}

TEST_CASE("branch selection refuses to L2-normalize a zero vector") {
  BranchSelectionParams p("b", 2, 3);
  CHECK_THROWS_AS(branch_selection(p, Vector(3), Vector{1, 1, 1}, true), NormalizationError);
}

// ---- spatial attention ----

TEST_CASE("spatial attention: identical positions give uniform weights") {
  Rng rng(127);
  SpatialAttnParams p("s", 2, 3, 2);
  randomize_params(p, rng);
  SpatialFeatureMap map(2, 2);
  for (auto& pos : map.positions) pos = Vector{0.7, -0.4};
  auto r = spatial_attention(p, map, rand_vec(rng, 3));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK_THAT(r.weights(i, j), Catch::Matchers::WithinAbs(0.25, 1e-15));
  CHECK_THAT(r.pooled[0], Catch::Matchers::WithinAbs(0.7, 1e-15));
  CHECK_THAT(r.pooled[1], Catch::Matchers::WithinAbs(-0.4, 1e-15));
}

TEST_CASE("spatial attention: K=1 passes the single position through") {
  Rng rng(131);
  SpatialAttnParams p("s", 2, 2, 3);
  randomize_params(p, rng);
  SpatialFeatureMap map(1, 3);
  map.positions[0] = Vector{1.0, 2.0, 3.0};
  auto r = spatial_attention(p, map, rand_vec(rng, 2));
  CHECK(r.weights(0, 0) == 1.0);
  for (std::size_t d = 0; d < 3; ++d) CHECK(r.pooled[d] == map.positions[0][d]);
}

TEST_CASE("spatial attention matches a direct 4-position evaluation") {
  Rng rng(137);
  SpatialAttnParams p("s", 2, 3, 2);
  randomize_params(p, rng);
  SpatialFeatureMap map(2, 2);
  for (auto& pos : map.positions) pos = rand_vec(rng, 2);
  Vector q = rand_vec(rng, 3);
  auto got = spatial_attention(p, map, q);

  Vector e(4);
  for (std::size_t i = 0; i < 4; ++i)
    e[i] = dot(p.v.value,
               tanh_map(add(matvec(p.w1.value, q), matvec(p.w2.value, map.positions[i]))));
  double denom = 0.0;
  for (std::size_t i = 0; i < 4; ++i) denom += std::exp(e[i]);
  Vector pooled(2);
  for (std::size_t i = 0; i < 4; ++i) {
    double w = std::exp(e[i]) / denom;
    CHECK_THAT(got.weights.data()[i], Catch::Matchers::WithinAbs(w, 1e-13));
    axpy(w, map.positions[i], pooled);
  }
  for (std::size_t d = 0; d < 2; ++d)
    CHECK_THAT(got.pooled[d], Catch::Matchers::WithinAbs(pooled[d], 1e-13));
}

TEST_CASE("spatial attention rejects K=0") {
  SpatialAttnParams p("s", 2, 2, 2);
  SpatialFeatureMap map;
  CHECK_THROWS_AS(spatial_attention(p, map, Vector(2)), std::invalid_argument);
}

// ---- jna ----

TEST_CASE("jna with T=1 passes both frames through") {
  Rng rng(139);
  JnaParams p("j", 2, 3, 3);
  randomize_params(p, rng);
  HiddenSequence h{rand_vec(rng, 3)}, g{rand_vec(rng, 3)};
  auto r = jna_forward(p, h, g);
  CHECK(r.trace.alpha(0, 0) == 1.0);
  CHECK(r.trace.beta(0, 0) == 1.0);
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(r.o_h[0][d] == h[0][d]);
    CHECK(r.o_g[0][d] == g[0][d]);
  }
}

TEST_CASE("jna with zero v and u averages each stream uniformly") {
  Rng rng(149);
  JnaParams p("j", 2, 2, 2);
  randomize_params(p, rng);
  p.v.value.fill(0.0);
  p.u.value.fill(0.0);
  HiddenSequence h{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
  HiddenSequence g{{2.0, 0.0}, {0.0, 2.0}, {-2.0, 0.0}};
  auto r = jna_forward(p, h, g);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK_THAT(r.o_h[t][0], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    CHECK_THAT(r.o_h[t][1], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    CHECK_THAT(r.o_g[t][0], Catch::Matchers::WithinAbs(0.0, 1e-15));
    CHECK_THAT(r.o_g[t][1], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
  }
}

TEST_CASE("jna matches the double-loop oracle") {
  Rng rng(151);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 3;
    JnaParams p("j", 2, 2, 2);
    randomize_params(p, rng);
    HiddenSequence h(T), g(T);
    for (auto& v : h) v = rand_vec(rng, 2);
    for (auto& v : g) v = rand_vec(rng, 2);
    auto got = jna_forward(p, h, g);
    auto want = jna_oracle(p, h, g);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j) {
        CHECK_THAT(got.trace.e(i, j), Catch::Matchers::WithinAbs(want.e(i, j), 1e-13));
        CHECK_THAT(got.trace.f(i, j), Catch::Matchers::WithinAbs(want.f(i, j), 1e-13));
        CHECK_THAT(got.trace.alpha(i, j), Catch::Matchers::WithinAbs(want.alpha(i, j), 1e-13));
        CHECK_THAT(got.trace.beta(i, j), Catch::Matchers::WithinAbs(want.beta(i, j), 1e-13));
      }
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t d = 0; d < 2; ++d) {
        CHECK_THAT(got.o_h[t][d], Catch::Matchers::WithinAbs(want.o_h[t][d], 1e-13));
        CHECK_THAT(got.o_g[t][d], Catch::Matchers::WithinAbs(want.o_g[t][d], 1e-13));
      }
  }
}

TEST_CASE("jna stochasticity: alpha columns and beta rows are distributions") {
  Rng rng(157);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + rng.index(5);
    JnaParams p("j", 3, 2, 3);
    randomize_params(p, rng, -1.5, 1.5);
    HiddenSequence h(T), g(T);
    for (auto& v : h) v = rand_vec(rng, 2, -3.0, 3.0);
    for (auto& v : g) v = rand_vec(rng, 3, -3.0, 3.0);
    auto r = jna_forward(p, h, g);
    REQUIRE(r.o_h.size() == T);
    REQUIRE(r.o_g.size() == T);
    for (std::size_t j = 0; j < T; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < T; ++i) {
        CHECK(r.trace.alpha(i, j) > 0.0);
        col += r.trace.alpha(i, j);
      }
      CHECK_THAT(col, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
    for (std::size_t i = 0; i < T; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < T; ++j) {
        CHECK(r.trace.beta(i, j) > 0.0);
        row += r.trace.beta(i, j);
      }
      CHECK_THAT(row, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
    // convexity: every output lies componentwise within its inputs' range
    for (std::size_t d = 0; d < 2; ++d) {
      double lo = h[0][d], hi = h[0][d];
      for (const auto& v : h) {
        lo = std::min(lo, v[d]);
        hi = std::max(hi, v[d]);
      }
      for (const auto& o : r.o_h) {
        CHECK(o[d] >= lo - 1e-9);
        CHECK(o[d] <= hi + 1e-9);
      }
    }
    for (std::size_t d = 0; d < 3; ++d) {
      double lo = g[0][d], hi = g[0][d];
      for (const auto& v : g) {
        lo = std::min(lo, v[d]);
        hi = std::max(hi, v[d]);
      }
      for (const auto& o : r.o_g) {
        CHECK(o[d] >= lo - 1e-9);
        CHECK(o[d] <= hi + 1e-9);
      }
    }
  }
}

TEST_CASE("jna permutation equivariance in h") {
  Rng rng(163);
  const std::size_t T = 4;
  JnaParams p("j", 2, 2, 2);
  randomize_params(p, rng);
  HiddenSequence h(T), g(T);
  for (auto& v : h) v = rand_vec(rng, 2);
  for (auto& v : g) v = rand_vec(rng, 2);
  auto base = jna_forward(p, h, g);

  const std::size_t perm[4] = {2, 0, 3, 1};  // permuted[i] = h[perm[i]]
  HiddenSequence hp(T);
  for (std::size_t i = 0; i < T; ++i) hp[i] = h[perm[i]];
  auto permuted = jna_forward(p, hp, g);

  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j)
      CHECK_THAT(permuted.trace.alpha(i, j),
                 Catch::Matchers::WithinAbs(base.trace.alpha(perm[i], j), 1e-12));
  // o_h is a set-weighted sum: unchanged in value
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t d = 0; d < 2; ++d)
      CHECK_THAT(permuted.o_h[j][d], Catch::Matchers::WithinAbs(base.o_h[j][d], 1e-12));
}

TEST_CASE("jna with tied weights and h == g gives alpha = beta^T") {
  Rng rng(167);
  const std::size_t T = 4;
  JnaParams p("j", 3, 2, 2);
  randomize_params(p, rng);
  p.w3.value = p.w1.value;
  p.w4.value = p.w2.value;
  p.u.value = p.v.value;
  HiddenSequence h(T);
  for (auto& v : h) v = rand_vec(rng, 2);
  auto r = jna_forward(p, h, h);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j)
      CHECK_THAT(r.trace.alpha(i, j), Catch::Matchers::WithinAbs(r.trace.beta(j, i), 1e-12));
}

TEST_CASE("jna argument and state errors") {
  JnaParams p("j", 2, 2, 2);
  HiddenSequence h{Vector(2)}, g{Vector(2), Vector(2)};
  CHECK_THROWS_AS(jna_forward(p, h, g), std::invalid_argument);
  CHECK_THROWS_AS(jna_forward(p, HiddenSequence{}, HiddenSequence{}), std::invalid_argument);
  JnaCache cache;
  CHECK_THROWS_AS(jna_backward(p, cache, {}, {}), StateError);
}

TEST_CASE("jna backward with zero upstream leaves all gradients at zero") {
  Rng rng(171);
  JnaParams p("j", 2, 2, 2);
  randomize_params(p, rng);
  const std::size_t T = 3;
  HiddenSequence h(T), g(T);
  for (auto& v : h) v = rand_vec(rng, 2);
  for (auto& v : g) v = rand_vec(rng, 2);
  JnaCache cache;
  jna_forward(p, h, g, &cache);
  std::vector<ParamRef> refs;
  p.collect(refs);
  zero_grads(refs);
  auto grads = jna_backward(p, cache, std::vector<Vector>(T, Vector(2)),
                            std::vector<Vector>(T, Vector(2)));
  for (const auto& pr : refs)
    for (double gv : pr.grad) CHECK(gv == 0.0);
  for (const auto& dv : grads.dh)
    for (double x : dv) CHECK(x == 0.0);
  for (const auto& dv : grads.dg)
    for (double x : dv) CHECK(x == 0.0);
}

TEST_CASE("jna gradient flows into g even when only o_h has upstream") {
  Rng rng(173);
  JnaParams p("j", 2, 2, 2);
  randomize_params(p, rng);
  const std::size_t T = 2;
  HiddenSequence h(T), g(T);
  for (auto& v : h) v = rand_vec(rng, 2);
  for (auto& v : g) v = rand_vec(rng, 2);
  JnaCache cache;
  jna_forward(p, h, g, &cache);
  std::vector<ParamRef> refs;
  p.collect(refs);
  zero_grads(refs);
  std::vector<Vector> d_oh(T, Vector{1.0, -1.0}), d_og(T, Vector(2));
  auto grads = jna_backward(p, cache, d_oh, d_og);
  double gnorm = 0.0;
  for (const auto& dv : grads.dg)
    for (double x : dv) gnorm += x * x;
  CHECK(gnorm > 0.0);
}

// ---- gate concentration ----

TEST_CASE("gate concentration of a uniform T=4 trace") {
  const std::size_t T = 4;
  AttentionTrace trace{"jna", Matrix(T, T), Matrix(T, T), Matrix(T, T, 0.25), Matrix(T, T, 0.25)};
  auto gc = gate_concentration(trace);
  CHECK_THAT(gc.entropy_alpha, Catch::Matchers::WithinAbs(std::log(4.0), 1e-12));
  CHECK_THAT(gc.entropy_beta, Catch::Matchers::WithinAbs(std::log(4.0), 1e-12));
  CHECK_THAT(gc.effective_support, Catch::Matchers::WithinAbs(4.0, 1e-12));
}

TEST_CASE("gate concentration of a near-one-hot trace approaches 0 and 1") {
  const std::size_t T = 4;
  const double eps = 1e-12;
  Matrix alpha(T, T, eps), beta(T, T, eps);
  for (std::size_t j = 0; j < T; ++j) alpha(j % T, j) = 1.0 - 3 * eps;
  for (std::size_t i = 0; i < T; ++i) beta(i, i) = 1.0 - 3 * eps;
  AttentionTrace trace{"jna", Matrix(T, T), Matrix(T, T), alpha, beta};
  auto gc = gate_concentration(trace);
  CHECK(gc.entropy_alpha < 1e-9);
  CHECK(gc.entropy_beta < 1e-9);
  CHECK_THAT(gc.effective_support, Catch::Matchers::WithinAbs(1.0, 1e-8));
}

// ---- finite differences over all four mechanisms ----

TEST_CASE("attention mechanisms pass finite-difference gradient checks") {
  for (auto [name, res] : {std::pair<const char*, GradCheckResult>{"additive", check_additive_attention(5)},
                           {"branch", check_branch_selection(6)},
                           {"spatial", check_spatial_attention(5)},
                           {"jna", check_jna(5)}}) {
    INFO(name << " max rel err " << res.max_rel_err);
    CHECK(res.max_rel_err < 1e-4);
  }
}
