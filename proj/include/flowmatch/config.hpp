// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "flowmatch/dataset.hpp"
#include "flowmatch/model.hpp"
#include "flowmatch/ode.hpp"
#include "flowmatch/path.hpp"

#include "json.hpp"

namespace flowmatch {

// Run configuration, JSON on disk. Key names are part of the interface:
//
// {
//   "schema_version": 1,
//   "seed": 7,
//   "out_dir": "runs/ot",
//   "dataset": {"kind": "checkerboard"},
//   "schedule": {"kind": "ot", "sigma_min": 1e-5},        // + vp/ve params
//   "model": {"hidden": [64,64,64], "activation": "silu",
//             "time_embedding": "concat", "fourier_frequencies": 8,
//             "parameterization": "vector_field"},         // or "preset"
//   "objective": "cfm",
//   "optimizer": {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
//                 "eps": 1e-8, "weight_decay": 0.0},
//   "train": {"steps": 20000, "batch": 256, "checkpoint_every": 0,
//             "stratified_t": false},
//   "solver": {"method": "dopri5", "steps": 100, "atol": 1e-5, "rtol": 1e-5,
//              "max_nfe": 1000000}
// }
//
// Unknown top-level keys are rejected so typos fail loudly. A loaded config
// re-serializes to an identical document (round-trippable).
struct RunConfig {
  std::uint64_t seed = 7;
  std::string out_dir = "out";
  ToyKind dataset = ToyKind::checkerboard;
  PathSchedule schedule = PathSchedule::ot();
  ModelConfig model;
  ObjectiveKind objective = ObjectiveKind::cfm;
  TrainConfig train;
  SolverCfg solver;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;
};

nlohmann::json solver_to_json(const SolverCfg& cfg);
SolverCfg solver_from_json(const nlohmann::json& j);

}  // namespace flowmatch
