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

#include "jna/gradcheck.hpp"
#include "jna/gru.hpp"

using namespace jna;

namespace {

void randomize_cell(GruCell& cell, Rng& rng) {
  std::vector<ParamRef> refs;
  cell.collect(refs);
  for (auto& p : refs)
    for (double& v : p.value) v = rng.uniform(-0.8, 0.8);
}

// independent scalar re-implementation of the four gate equations
Vector gru_step_oracle(const GruCell& c, const Vector& x, const Vector& h_prev) {
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const std::size_t hd = c.hidden_dim;
  Vector h(hd);
  for (std::size_t i = 0; i < hd; ++i) {
    double az = c.b_z.value[i], ar = c.b_r.value[i];
    for (std::size_t j = 0; j < c.input_dim; ++j) {
      az += c.w_z.value(i, j) * x[j];
      ar += c.w_r.value(i, j) * x[j];
    }
    for (std::size_t j = 0; j < hd; ++j) {
      az += c.u_z.value(i, j) * h_prev[j];
      ar += c.u_r.value(i, j) * h_prev[j];
    }
    double z = sig(az), r_unused = sig(ar);
    (void)r_unused;
    // candidate needs the whole reset vector; recompute it
    double ah = c.b_h.value[i];
    for (std::size_t j = 0; j < c.input_dim; ++j) ah += c.w_h.value(i, j) * x[j];
    for (std::size_t j = 0; j < hd; ++j) {
      double arj = c.b_r.value[j];
      for (std::size_t k = 0; k < c.input_dim; ++k) arj += c.w_r.value(j, k) * x[k];
      for (std::size_t k = 0; k < hd; ++k) arj += c.u_r.value(j, k) * h_prev[k];
      ah += c.u_h.value(i, j) * (sig(arj) * h_prev[j]);
    }
    h[i] = (1.0 - z) * h_prev[i] + z * std::tanh(ah);
  }
  return h;
}

}  // namespace

TEST_CASE("gru_step: zero params and zero state stay at zero") {
  GruCell cell("c", 3, 4);
  Vector x{0.0, 0.0, 0.0};
  Vector h = gru_step(cell, x, Vector(4));
  for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("gru_step keeps hidden entries in (-1, 1)") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    GruCell cell("c", 2, 3);
    randomize_cell(cell, rng);
    Vector h(3);
    for (double& v : h) v = rng.uniform(-0.999, 0.999);
    for (int t = 0; t < 10; ++t) {
      Vector x{rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
      h = gru_step(cell, x, h);
      for (double v : h) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
      }
    }
  }
}

TEST_CASE("gru_step matches the scalar oracle") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    GruCell cell("c", 3, 3);
    randomize_cell(cell, rng);
    Vector x{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    Vector h_prev{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
    Vector got = gru_step(cell, x, h_prev);
    Vector want = gru_step_oracle(cell, x, h_prev);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK_THAT(got[i], Catch::Matchers::WithinAbs(want[i], 1e-13));
  }
}

TEST_CASE("gru_step rejects mismatched dims") {
  GruCell cell("c", 3, 4);
  CHECK_THROWS_AS(gru_step(cell, Vector(2), Vector(4)), DimensionError);
  CHECK_THROWS_AS(gru_step(cell, Vector(3), Vector(5)), DimensionError);
}

TEST_CASE("encode_sequence with T=1 equals a single gru_step from zero") {
  Rng rng(41);
  std::vector<GruCell> cells;
  cells.emplace_back("l0", 2, 3);
  randomize_cell(cells[0], rng);
  Matrix seq(1, 2);
  seq(0, 0) = 0.3;
  seq(0, 1) = -0.7;
  auto states = encode_sequence(cells, seq);
  REQUIRE(states.size() == 1);
  Vector want = gru_step(cells[0], seq.row_vec(0), Vector(3));
  for (std::size_t i = 0; i < 3; ++i) CHECK(states[0][i] == want[i]);
}

TEST_CASE("encode_sequence: zero inputs and zero params give zero states") {
  std::vector<GruCell> cells;
  cells.emplace_back("l0", 2, 3);
  cells.emplace_back("l1", 3, 2);
  auto states = encode_sequence(cells, Matrix(5, 2));
  for (const auto& h : states)
    for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("encode_sequence matches a manual two-layer unroll") {
  Rng rng(43);
  std::vector<GruCell> cells;
  cells.emplace_back("l0", 2, 3);
  cells.emplace_back("l1", 3, 2);
  randomize_cell(cells[0], rng);
  randomize_cell(cells[1], rng);
  Matrix seq(4, 2);
  for (double& v : seq.span()) v = rng.uniform(-1.0, 1.0);

  auto states = encode_sequence(cells, seq);

  Vector h0(3), h1(2);
  for (std::size_t t = 0; t < 4; ++t) {
    h0 = gru_step_oracle(cells[0], seq.row_vec(t), h0);
    h1 = gru_step_oracle(cells[1], h0, h1);
    for (std::size_t i = 0; i < 2; ++i)
      CHECK_THAT(states[t][i], Catch::Matchers::WithinAbs(h1[i], 1e-12));
  }
}

TEST_CASE("encode_sequence is deterministic") {
  Rng rng(47);
  std::vector<GruCell> cells;
  cells.emplace_back("l0", 3, 4);
  randomize_cell(cells[0], rng);
  Matrix seq(6, 3);
  for (double& v : seq.span()) v = rng.uniform(-1.0, 1.0);
  auto a = encode_sequence(cells, seq);
  auto b = encode_sequence(cells, seq);
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].dim(); ++i) CHECK(a[t][i] == b[t][i]);
}

TEST_CASE("encode_sequence argument errors") {
  std::vector<GruCell> cells;
  cells.emplace_back("l0", 2, 3);
  CHECK_THROWS_AS(encode_sequence(cells, Matrix(0, 2)), std::invalid_argument);
  CHECK_THROWS_AS(encode_sequence(cells, Matrix(3, 5)), DimensionError);
  CHECK_THROWS_AS(encode_sequence(std::vector<GruCell>{}, Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("encode_backward: all-zero upstream gives zero grads") {
  Rng rng(53);
  std::vector<GruCell> cells;
  cells.emplace_back("l0", 2, 3);
  randomize_cell(cells[0], rng);
  std::vector<ParamRef> refs;
  cells[0].collect(refs);
  zero_grads(refs);

  Matrix seq(3, 2);
  for (double& v : seq.span()) v = rng.uniform(-1.0, 1.0);
  EncodeCache cache;
  encode_sequence(cells, seq, &cache);
  Matrix dseq = encode_backward(cells, cache, std::vector<Vector>(3, Vector(3)));
  for (double v : dseq.span()) CHECK(v == 0.0);
  for (const auto& p : refs)
    for (double g : p.grad) CHECK(g == 0.0);
}

TEST_CASE("encode_backward with T=1 routes gradient through a single step") {
  Rng rng(59);
  std::vector<GruCell> cells;
  cells.emplace_back("l0", 2, 2);
  randomize_cell(cells[0], rng);
  Matrix seq(1, 2);
  seq(0, 0) = 0.4;
  seq(0, 1) = -0.2;

  EncodeCache cache;
  encode_sequence(cells, seq, &cache);
  Vector w{1.0, -2.0};
  std::vector<ParamRef> refs;
  cells[0].collect(refs);
  zero_grads(refs);
  Matrix dseq = encode_backward(cells, cache, {w});

  GruCell single = cells[0];
  std::vector<ParamRef> srefs;
  single.collect(srefs);
  zero_grads(srefs);
  GruStepCache scache;
  gru_step(single, seq.row_vec(0), Vector(2), &scache);
  auto grads = gru_step_backward(single, scache, w);
  for (std::size_t i = 0; i < 2; ++i) CHECK(dseq(0, i) == grads.dx[i]);
}

TEST_CASE("encode_backward requires a forward cache") {
  std::vector<GruCell> cells;
  cells.emplace_back("l0", 2, 2);
  EncodeCache empty;
  CHECK_THROWS_AS(encode_backward(cells, empty, {Vector(2)}), StateError);
}

TEST_CASE("BPTT matches central finite differences on small instances") {
  auto res = check_gru_bptt(5);
  INFO("max rel err " << res.max_rel_err);
  CHECK(res.max_rel_err < 1e-4);
}
