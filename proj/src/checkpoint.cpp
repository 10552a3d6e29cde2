// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/checkpoint.hpp"

#include <fstream>

namespace flowmatch {

void Checkpoint::save(const std::string& path) const {
  nlohmann::json j;
  j["format"] = "flowmatch-checkpoint";
  j["version"] = 1;
  j["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
  nlohmann::json ts = nlohmann::json::object();
  for (const auto& [name, t] : tensors) {
    nlohmann::json tj;
    tj["shape"] = t.shape();
    tj["data"] = std::vector<double>(t.data(), t.data() + t.numel());
    ts[name] = std::move(tj);
  }
  j["tensors"] = std::move(ts);
  std::ofstream os(path);
  FM_CHECK(os.good(), ConfigError, "cannot open checkpoint file for writing: ", path);
  os << j.dump();
  os << "\n";
  FM_CHECK(os.good(), ConfigError, "failed writing checkpoint: ", path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path);
  FM_CHECK(is.good(), ConfigError, "cannot open checkpoint file: ", path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(concat_msg("invalid checkpoint JSON in ", path, ": ", e.what()));
  }
  FM_CHECK(j.value("format", "") == "flowmatch-checkpoint", ConfigError,
           "not a flowmatch checkpoint: ", path);
  FM_CHECK(j.value("version", 0) == 1, ConfigError,
           "unsupported checkpoint version in ", path);
  Checkpoint ck;
  ck.meta = j.value("meta", nlohmann::json::object());
  for (const auto& [name, tj] : j.at("tensors").items()) {
    auto shape = tj.at("shape").get<std::vector<std::int64_t>>();
    auto data = tj.at("data").get<std::vector<double>>();
    Tensor t(std::move(shape), std::move(data));
    t.check_finite("checkpoint tensor '" + name + "'");
    ck.tensors.emplace(name, std::move(t));
  }
  return ck;
}

}  // namespace flowmatch
