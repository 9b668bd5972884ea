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

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "jna/gru.hpp"
#include "jna/matrix.hpp"

namespace jna {

/// Ground-truth signal-bearing frames; 1 at planted positions.
using SalientMask = std::vector<std::uint8_t>;

/// One two-stream training example: aligned spatial/temporal feature
/// sequences, a class label, and the planted salient-frame mask.
struct LabeledSequencePair {
  FeatureSequence seq_s;  // T x dim_s
  FeatureSequence seq_t;  // T x dim_t
  std::size_t label = 0;
  SalientMask salient_mask;  // length T
};

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row_span(i);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& rows) {
  if (!rows.is_array() || rows.empty()) throw ConfigError("matrix_from_json: expected nested array");
  auto first = rows[0].get<std::vector<double>>();
  Matrix m(rows.size(), first.size());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = rows[i].get<std::vector<double>>();
    if (row.size() != m.cols()) throw DimensionError("matrix_from_json: ragged rows");
    std::copy(row.begin(), row.end(), m.row_span(i).begin());
  }
  return m;
}

inline nlohmann::json pair_to_json(const LabeledSequencePair& p) {
  nlohmann::json j;
  j["label"] = p.label;
  j["salient_mask"] = p.salient_mask;
  j["seq_s"] = matrix_to_json(p.seq_s);
  j["seq_t"] = matrix_to_json(p.seq_t);
  return j;
}

inline LabeledSequencePair pair_from_json(const nlohmann::json& j) {
  LabeledSequencePair p;
  p.label = j.at("label").get<std::size_t>();
  p.salient_mask = j.at("salient_mask").get<SalientMask>();
  p.seq_s = matrix_from_json(j.at("seq_s"));
  p.seq_t = matrix_from_json(j.at("seq_t"));
  if (p.seq_s.rows() != p.seq_t.rows()) throw ConfigError("pair_from_json: stream lengths differ");
  return p;
}

}  // namespace jna
