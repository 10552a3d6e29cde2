// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "flowmatch/tensor.hpp"

#include "json.hpp"

namespace flowmatch {

// Versioned JSON container of named tensors:
// {
//   "format": "flowmatch-checkpoint",
//   "version": 1,
//   "meta": { ... },                       // free-form, e.g. model config
//   "tensors": { "name": {"shape": [..], "data": [..]}, ... }
// }
// Doubles round-trip bit-exactly through the JSON layer (shortest-repr
// serialization), so save -> load -> forward is bitwise identical.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  nlohmann::json meta;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace flowmatch
