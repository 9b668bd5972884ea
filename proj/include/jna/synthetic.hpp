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

/// Synthetic two-stream classification tasks with planted salient frames.
/// Every frame is Gaussian noise; salient frames additionally carry a
/// class-specific prototype vector, so the ground truth of which frames are
/// discriminative is known exactly.

#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jna/data.hpp"
#include "jna/matrix.hpp"
#include "jna/rng.hpp"

namespace jna {

struct SyntheticTaskSpec {
  std::size_t num_classes = 5;
  std::size_t dim_s = 32;
  std::size_t dim_t = 32;
  std::size_t seq_len = 16;
  std::size_t salient_count = 4;  // signal-bearing frames per sequence
  double noise_sigma = 1.0;
  /// Probability that the temporal stream places its signal on the same
  /// frames as the spatial stream (1 = always shared).
  double cross_stream_rho = 1.0;
  std::size_t train_size = 500;
  std::size_t test_size = 200;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_classes < 2) throw ConfigError("SyntheticTaskSpec: need at least 2 classes");
    if (dim_s == 0 || dim_t == 0 || seq_len == 0)
      throw ConfigError("SyntheticTaskSpec: dims and seq_len must be positive");
    if (salient_count == 0 || salient_count > seq_len)
      throw ConfigError("SyntheticTaskSpec: salient_count must be in [1, seq_len]");
    if (noise_sigma < 0.0) throw ConfigError("SyntheticTaskSpec: noise_sigma must be >= 0");
    if (cross_stream_rho < 0.0 || cross_stream_rho > 1.0)
      throw ConfigError("SyntheticTaskSpec: cross_stream_rho must be in [0,1]");
    if (train_size == 0 || test_size == 0)
      throw ConfigError("SyntheticTaskSpec: train_size and test_size must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"num_classes", num_classes},
            {"dim_s", dim_s},
            {"dim_t", dim_t},
            {"seq_len", seq_len},
            {"salient_count", salient_count},
            {"noise_sigma", noise_sigma},
            {"cross_stream_rho", cross_stream_rho},
            {"train_size", train_size},
            {"test_size", test_size},
            {"seed", seed}};
  }

  static SyntheticTaskSpec from_json(const nlohmann::json& j) {
    SyntheticTaskSpec s;
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.dim_s = j.at("dim_s").get<std::size_t>();
    s.dim_t = j.at("dim_t").get<std::size_t>();
    s.seq_len = j.at("seq_len").get<std::size_t>();
    s.salient_count = j.at("salient_count").get<std::size_t>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.cross_stream_rho = j.at("cross_stream_rho").get<double>();
    s.train_size = j.at("train_size").get<std::size_t>();
    s.test_size = j.at("test_size").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
  }
};

struct SyntheticDataset {
  SyntheticTaskSpec spec;
  std::vector<LabeledSequencePair> train, test;
};

namespace detail {

/// Class prototypes are random directions of fixed norm. Keeping the norm
/// comparable to the noise scale is what makes frame selection matter: a
/// planted frame is then only weakly detectable on its own, and averaging
/// over non-salient frames genuinely dilutes the signal.
inline constexpr double kPrototypeNorm = 3.0;

inline Matrix draw_prototypes(Rng& rng, std::size_t classes, std::size_t dim) {
  Matrix protos(classes, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    auto row = protos.row_span(c);
    double norm_sq = 0.0;
    for (double& v : row) {
      v = rng.normal();
      norm_sq += v * v;
    }
    double scale_by = norm_sq > 0.0 ? kPrototypeNorm / std::sqrt(norm_sq) : 0.0;
    for (double& v : row) v *= scale_by;
  }
  return protos;
}

inline SalientMask to_mask(const std::vector<std::size_t>& positions, std::size_t len) {
  SalientMask mask(len, 0);
  for (std::size_t p : positions) mask[p] = 1;
  return mask;
}

inline FeatureSequence draw_stream(Rng& rng, const SalientMask& mask,
                                   std::span<const double> proto, std::size_t len,
                                   std::size_t dim, double sigma) {
  FeatureSequence seq(len, dim);
  for (std::size_t t = 0; t < len; ++t) {
    auto row = seq.row_span(t);
    for (std::size_t d = 0; d < dim; ++d) {
      row[d] = sigma * rng.normal();
      if (mask[t]) row[d] += proto[d];
    }
  }
  return seq;
}

}  // namespace detail

/// Deterministically generates the task: per-class prototypes first, then
/// the train pairs, then the test pairs. The recorded salient_mask is the
/// spatial stream's planted set; the temporal stream reuses it with
/// probability cross_stream_rho and otherwise draws its own.
inline SyntheticDataset generate_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticDataset ds;
  ds.spec = spec;

  Matrix protos_s = detail::draw_prototypes(rng, spec.num_classes, spec.dim_s);
  Matrix protos_t = detail::draw_prototypes(rng, spec.num_classes, spec.dim_t);

  auto make_pair = [&]() {
    LabeledSequencePair p;
    p.label = rng.index(spec.num_classes);
    SalientMask mask_s = detail::to_mask(rng.sample_indices(spec.seq_len, spec.salient_count),
                                         spec.seq_len);
    SalientMask mask_t = mask_s;
    if (rng.uniform() >= spec.cross_stream_rho)
      mask_t = detail::to_mask(rng.sample_indices(spec.seq_len, spec.salient_count), spec.seq_len);
    p.seq_s = detail::draw_stream(rng, mask_s, protos_s.row_span(p.label), spec.seq_len, spec.dim_s,
                                  spec.noise_sigma);
    p.seq_t = detail::draw_stream(rng, mask_t, protos_t.row_span(p.label), spec.seq_len, spec.dim_t,
                                  spec.noise_sigma);
    p.salient_mask = std::move(mask_s);
    return p;
  };

  ds.train.reserve(spec.train_size);
  for (std::size_t i = 0; i < spec.train_size; ++i) ds.train.push_back(make_pair());
  ds.test.reserve(spec.test_size);
  for (std::size_t i = 0; i < spec.test_size; ++i) ds.test.push_back(make_pair());
  return ds;
}

/// Reassigns labels uniformly at random (control experiment: a model trained
/// on shuffled labels should sit at chance accuracy).
inline void shuffle_labels(std::vector<LabeledSequencePair>& pairs, std::size_t num_classes,
                           Rng& rng) {
  for (auto& p : pairs) p.label = rng.index(num_classes);
}

// ---- dataset files ----

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr const char* kDatasetFormatName = "jna-dataset";

inline nlohmann::json dataset_to_json(const SyntheticDataset& ds) {
  nlohmann::json j;
  j["format"] = kDatasetFormatName;
  j["version"] = kDatasetFormatVersion;
  j["spec"] = ds.spec.to_json();
  nlohmann::json train = nlohmann::json::array(), test = nlohmann::json::array();
  for (const auto& p : ds.train) train.push_back(pair_to_json(p));
  for (const auto& p : ds.test) test.push_back(pair_to_json(p));
  j["train"] = std::move(train);
  j["test"] = std::move(test);
  return j;
}

inline void save_dataset(const std::string& path, const SyntheticDataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << dataset_to_json(ds).dump() << "\n";
}

inline SyntheticDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != kDatasetFormatName)
    throw ConfigError("'" + path + "' is not a " + std::string(kDatasetFormatName) + " file");
  if (j.value("version", -1) != kDatasetFormatVersion)
    throw ConfigError("unsupported dataset version in '" + path + "'");
  SyntheticDataset ds;
  ds.spec = SyntheticTaskSpec::from_json(j.at("spec"));
  for (const auto& pj : j.at("train")) ds.train.push_back(pair_from_json(pj));
  for (const auto& pj : j.at("test")) ds.test.push_back(pair_from_json(pj));
  return ds;
}

}  // namespace jna
