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
#include <filesystem>
#include <fstream>

#include "jna/experiment.hpp"

using namespace jna;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

AttentionTrace uniform_trace(std::size_t T) {
  return {"jna", Matrix(T, T), Matrix(T, T), Matrix(T, T, 1.0 / T), Matrix(T, T, 1.0 / T)};
}

}  // namespace

TEST_CASE("salient recovery of a uniform trace is salient_count / T") {
  SalientMask mask{1, 0, 1, 0};
  CHECK(salient_recovery(uniform_trace(4), mask) == 0.5);
  SalientMask quarter{1, 0, 0, 0};
  CHECK(salient_recovery(uniform_trace(4), quarter) == 0.25);
}

TEST_CASE("salient recovery is 1 when all mass sits on salient frames") {
  const std::size_t T = 4;
  Matrix alpha(T, T), beta(T, T);
  SalientMask mask{0, 1, 0, 1};
  for (std::size_t j = 0; j < T; ++j) {
    alpha(1, j) = 0.5;
    alpha(3, j) = 0.5;
  }
  for (std::size_t i = 0; i < T; ++i) {
    beta(i, 1) = 0.25;
    beta(i, 3) = 0.75;
  }
  AttentionTrace trace{"jna", Matrix(T, T), Matrix(T, T), alpha, beta};
  CHECK(salient_recovery(trace, mask) == 1.0);
}

TEST_CASE("salient recovery validates the mask length") {
  CHECK_THROWS_AS(salient_recovery(uniform_trace(4), SalientMask{1, 0}), std::invalid_argument);
}

TEST_CASE("trace export writes 4 T^2 blocks and round-trips") {
  Rng rng(401);
  const std::size_t T = 2;
  JnaParams p("j", 2, 2, 2);
  std::vector<ParamRef> refs;
  p.collect(refs);
  for (auto& pr : refs)
    for (double& v : pr.value) v = rng.uniform(-0.8, 0.8);
  HiddenSequence h(T), g(T);
  for (auto& v : h) {
    v = Vector(2);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
  }
  for (auto& v : g) {
    v = Vector(2);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
  }
  auto r = jna_forward(p, h, g);

  auto path = (std::filesystem::temp_directory_path() / "jna_trace_test.csv").string();
  export_trace(r.trace, path, 7);

  std::string body = slurp(path);
  // header + 4 matrices x 4 entries
  CHECK(std::count(body.begin(), body.end(), '\n') == 1 + 16);
  CHECK(body.find("sequence_id,mechanism,matrix,i,j,value") == 0);
  CHECK(body.find("7,jna,alpha,0,0,") != std::string::npos);

  AttentionTrace back = import_trace_csv(path);
  CHECK(back.mechanism == "jna");
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j) {
      CHECK(back.e(i, j) == r.trace.e(i, j));
      CHECK(back.f(i, j) == r.trace.f(i, j));
      CHECK(back.alpha(i, j) == r.trace.alpha(i, j));
      CHECK(back.beta(i, j) == r.trace.beta(i, j));
    }
  // reimported gates still satisfy the stochasticity invariants
  for (std::size_t j = 0; j < T; ++j) {
    double col = 0.0, row = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
      CHECK(back.alpha(i, j) > 0.0);
      CHECK(back.beta(j, i) > 0.0);
      col += back.alpha(i, j);
      row += back.beta(j, i);
    }
    CHECK_THAT(col, Catch::Matchers::WithinAbs(1.0, 1e-9));
    CHECK_THAT(row, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }

  std::filesystem::remove(path);
  std::filesystem::remove(detail::summary_path_for(path));
}

TEST_CASE("trace summary flags frames with negative mean pre-softmax score") {
  const std::size_t T = 3;
  Matrix e(T, T, 1.0), f(T, T, 1.0);
  for (std::size_t j = 0; j < T; ++j) e(1, j) = -2.0;  // frame 1 negative on the e side
  AttentionTrace trace{"jna", e, f, Matrix(T, T, 1.0 / T), Matrix(T, T, 1.0 / T)};
  auto path = (std::filesystem::temp_directory_path() / "jna_trace_neg.csv").string();
  export_trace(trace, path, 0);
  std::string summary = slurp(detail::summary_path_for(path));
  CHECK(summary.find("0,jna,e,0,1,0") != std::string::npos);   // frame 0: mean 1, not flagged
  CHECK(summary.find("0,jna,e,1,-2,1") != std::string::npos);  // frame 1: mean -2, flagged
  CHECK(summary.find("0,jna,f,0,1,0") != std::string::npos);   // f side present, not flagged
  std::filesystem::remove(path);
  std::filesystem::remove(detail::summary_path_for(path));
}

TEST_CASE("experiment matrix runs paired cells and is reproducible") {
  ExperimentOptions opts;
  opts.task.num_classes = 2;
  opts.task.dim_s = 6;
  opts.task.dim_t = 6;
  opts.task.seq_len = 4;
  opts.task.salient_count = 2;
  opts.task.noise_sigma = 0.4;
  opts.task.train_size = 24;
  opts.task.test_size = 16;
  opts.model.dim_s = 6;
  opts.model.dim_t = 6;
  opts.model.gru_layers = {5};
  opts.model.attn_dim = 3;
  opts.model.num_classes = 2;
  opts.train_opts.joint = {0.01, {}, 0.1, 30, 0.9, 4};
  opts.train_opts.pretrain = {0.01, {}, 0.1, 10, 0.9, 4};
  opts.train_opts.window = {4, 1, true};
  opts.heads = {HeadType::separate_streams, HeadType::jna};
  opts.seeds = {1, 2};
  opts.trace_samples = 4;

  auto results = run_experiment_matrix(opts);
  REQUIRE(results.size() == 4);
  CHECK(results[0].head == HeadType::separate_streams);
  CHECK(results[2].head == HeadType::jna);
  for (const auto& r : results) {
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
    CHECK(r.dominance_ratio >= 1.0);
    if (r.head == HeadType::jna) {
      REQUIRE(r.gate_entropy.has_value());
      REQUIRE(r.salient_recovery.has_value());
      CHECK(*r.salient_recovery > 0.0);
      CHECK(*r.salient_recovery < 1.0);
    } else {
      CHECK(!r.gate_entropy.has_value());
    }
  }

  auto again = run_experiment_matrix(opts);
  CHECK(results_to_csv(results) == results_to_csv(again));

  std::string table = format_results_table(results);
  CHECK(table.find("separate_streams") != std::string::npos);
  CHECK(table.find("mean") != std::string::npos);
}

TEST_CASE("gate entropy falls and recovery rises after training on an easy task") {
  ExperimentOptions opts;
  opts.task.num_classes = 2;
  opts.task.dim_s = 8;
  opts.task.dim_t = 8;
  opts.task.seq_len = 6;
  opts.task.salient_count = 2;
  opts.task.noise_sigma = 0.15;
  opts.task.train_size = 80;
  opts.task.test_size = 24;
  opts.task.seed = 3;
  opts.model.dim_s = 8;
  opts.model.dim_t = 8;
  opts.model.gru_layers = {8};
  opts.model.attn_dim = 6;
  opts.model.num_classes = 2;
  opts.model.head = HeadType::jna;

  auto ds = generate_task(opts.task);
  Rng rng(3);
  Model trained = build_model(opts.model, rng);
  Rng rng2(3);
  Model untrained = build_model(opts.model, rng2);

  TrainOptions topts;
  topts.joint = {0.02, {300}, 0.1, 400, 0.9, 4};
  topts.pretrain = {0.02, {}, 0.1, 60, 0.9, 4};
  topts.window = {6, 1, true};
  topts.seed = 3;
  train(trained, ds.train, topts);

  auto stats = [&](Model& m) {
    double entropy = 0.0, recovery = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
      AttentionTrace trace;
      model_forward(m, ds.test[i].seq_s, ds.test[i].seq_t, &trace);
      auto gc = gate_concentration(trace);
      entropy += 0.5 * (gc.entropy_alpha + gc.entropy_beta);
      recovery += salient_recovery(trace, ds.test[i].salient_mask);
    }
    return std::pair{entropy / 16.0, recovery / 16.0};
  };
  auto [H_trained, R_trained] = stats(trained);
  auto [H_untrained, R_untrained] = stats(untrained);
  INFO("trained H=" << H_trained << " R=" << R_trained << "; untrained H=" << H_untrained
                    << " R=" << R_untrained);
  CHECK(H_trained < H_untrained);
  CHECK(R_trained > R_untrained);
}
