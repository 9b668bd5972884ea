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

/// Parameter checkpoints. A checkpoint is a versioned JSON map of
/// name -> shape -> row-major values; momentum and gradient buffers are
/// not persisted. See README for the format contract.

#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jna/param.hpp"

namespace jna {

inline constexpr int kParamsFormatVersion = 1;
inline constexpr const char* kParamsFormatName = "jna-params";

inline nlohmann::json params_to_json(const std::vector<ParamRef>& params) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : params) {
    nlohmann::json j;
    j["name"] = p.name;
    j["shape"] = p.shape;
    j["data"] = std::vector<double>(p.value.begin(), p.value.end());
    out.push_back(std::move(j));
  }
  return out;
}

/// Fills the referenced parameter values from a params JSON array.
/// Every ref must be present with a matching shape.
inline void params_from_json(const nlohmann::json& arr, const std::vector<ParamRef>& params) {
  if (!arr.is_array()) throw ConfigError("params_from_json: expected array");
  for (const auto& p : params) {
    const nlohmann::json* found = nullptr;
    for (const auto& j : arr) {
      if (j.at("name").get<std::string>() == p.name) {
        found = &j;
        break;
      }
    }
    if (!found) throw ConfigError("checkpoint missing parameter '" + p.name + "'");
    auto shape = found->at("shape").get<std::vector<std::size_t>>();
    if (shape != p.shape)
      throw DimensionError("checkpoint shape mismatch for '" + p.name + "'");
    auto data = found->at("data").get<std::vector<double>>();
    if (data.size() != p.value.size())
      throw DimensionError("checkpoint data length mismatch for '" + p.name + "'");
    std::copy(data.begin(), data.end(), p.value.begin());
  }
}

inline void save_params(const std::string& path, const std::vector<ParamRef>& params) {
  nlohmann::json j;
  j["format"] = kParamsFormatName;
  j["version"] = kParamsFormatVersion;
  j["params"] = params_to_json(params);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

inline void load_params(const std::string& path, const std::vector<ParamRef>& params) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != kParamsFormatName)
    throw ConfigError("'" + path + "' is not a " + std::string(kParamsFormatName) + " file");
  if (j.value("version", -1) != kParamsFormatVersion)
    throw ConfigError("unsupported checkpoint version in '" + path + "'");
  params_from_json(j.at("params"), params);
}

}  // namespace jna
