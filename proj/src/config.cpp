// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/config.hpp"

#include <fstream>
#include <set>

namespace flowmatch {

nlohmann::json solver_to_json(const SolverCfg& cfg) {
  nlohmann::json j;
  j["method"] = SolverCfg::method_name(cfg.method);
  j["steps"] = cfg.steps;
  j["atol"] = cfg.atol;
  j["rtol"] = cfg.rtol;
  j["max_nfe"] = cfg.max_nfe;
  return j;
}

SolverCfg solver_from_json(const nlohmann::json& j) {
  SolverCfg cfg;
  if (j.contains("method"))
    cfg.method = SolverCfg::method_from_string(j.at("method").get<std::string>());
  cfg.steps = j.value("steps", cfg.steps);
  cfg.atol = j.value("atol", cfg.atol);
  cfg.rtol = j.value("rtol", cfg.rtol);
  cfg.max_nfe = j.value("max_nfe", cfg.max_nfe);
  FM_CHECK(cfg.steps >= 1, ConfigError, "solver config: steps must be >= 1, key 'steps'");
  FM_CHECK(cfg.atol > 0 && cfg.rtol > 0, ConfigError,
           "solver config: keys 'atol'/'rtol' must be positive");
  return cfg;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["dataset"] = {{"kind", to_string(dataset)}};
  j["schedule"] = schedule.to_json();
  j["model"] = model.to_json();
  j["objective"] = to_string(objective);
  j["optimizer"] = {{"lr", train.adam.lr},
                    {"beta1", train.adam.beta1},
                    {"beta2", train.adam.beta2},
                    {"eps", train.adam.eps},
                    {"weight_decay", train.adam.weight_decay}};
  j["train"] = {{"steps", train.steps},
                {"batch", train.batch},
                {"checkpoint_every", train.checkpoint_every},
                {"stratified_t", train.stratified_t}};
  j["solver"] = solver_to_json(solver);
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "schema_version", "seed",      "out_dir", "dataset", "schedule",
      "model",          "objective", "optimizer", "train", "solver"};
  for (const auto& [key, val] : j.items())
    FM_CHECK(known.count(key), ConfigError, "unknown config key '", key, "'");
  const int ver = j.value("schema_version", 1);
  FM_CHECK(ver == 1, ConfigError, "unsupported config schema_version ", ver);

  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  if (j.contains("dataset")) {
    FM_CHECK(j.at("dataset").contains("kind"), ConfigError,
             "config key 'dataset' needs a 'kind'");
    cfg.dataset = toy_kind_from_string(j.at("dataset").at("kind").get<std::string>());
  }
  if (j.contains("schedule")) cfg.schedule = PathSchedule::from_json(j.at("schedule"));
  if (j.contains("model")) cfg.model = ModelConfig::from_json(j.at("model"));
  if (j.contains("objective"))
    cfg.objective = objective_from_string(j.at("objective").get<std::string>());
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    cfg.train.adam.lr = o.value("lr", cfg.train.adam.lr);
    cfg.train.adam.beta1 = o.value("beta1", cfg.train.adam.beta1);
    cfg.train.adam.beta2 = o.value("beta2", cfg.train.adam.beta2);
    cfg.train.adam.eps = o.value("eps", cfg.train.adam.eps);
    cfg.train.adam.weight_decay = o.value("weight_decay", cfg.train.adam.weight_decay);
    FM_CHECK(cfg.train.adam.lr >= 0, ConfigError, "config key 'optimizer.lr' must be >= 0");
  }
  if (j.contains("train")) {
    const auto& tr = j.at("train");
    cfg.train.steps = tr.value("steps", cfg.train.steps);
    cfg.train.batch = tr.value("batch", cfg.train.batch);
    cfg.train.checkpoint_every = tr.value("checkpoint_every", cfg.train.checkpoint_every);
    cfg.train.stratified_t = tr.value("stratified_t", cfg.train.stratified_t);
    FM_CHECK(cfg.train.steps >= 0, ConfigError, "config key 'train.steps' must be >= 0");
    FM_CHECK(cfg.train.batch >= 1, ConfigError, "config key 'train.batch' must be >= 1");
  }
  if (j.contains("solver")) cfg.solver = solver_from_json(j.at("solver"));
  cfg.train.objective = cfg.objective;
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  FM_CHECK(is.good(), ConfigError, "cannot open config file: ", path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(concat_msg("invalid JSON in ", path, ": ", e.what()));
  }
  return from_json(j);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream os(path);
  FM_CHECK(os.good(), ConfigError, "cannot open config file for writing: ", path);
  os << to_json().dump(2) << "\n";
}

}  // namespace flowmatch
