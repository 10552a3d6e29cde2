// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "flowmatch/common.hpp"

#include "json.hpp"

namespace flowmatch {

// Numerical verification suite. Each named check measures one invariant of
// the path/oracle/objective/solver stack against a pinned tolerance. The CLI
// `verify` command and the acceptance tests both run through here.
//
// Mutations are seeded faults used as negative controls: a mutated run must
// make the affected checks fail (and verify exit nonzero).
enum class Mutation {
  none,
  ot_vf_sign,     // sign-flipped ot closed-form field
  constant_drift, // constant drift added to the field in the PDE checks
  reversal_sign,  // time reversal without negating the field
};

Mutation mutation_from_string(const std::string& s);
std::vector<std::string> mutation_names();

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;   // worst observed value
  double tolerance = 0.0;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_pass = false;
  std::uint64_t seed = 0;
  std::string mutation = "none";
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

// Canonical check names, in run order. The report enumerates exactly these.
std::vector<std::string> verify_manifest();

VerifyReport run_verify(std::uint64_t seed, Mutation mutation = Mutation::none);

// Desk-scale checkerboard training surrogate (the long check):
// trains cfm models on the ot and vp paths and compares held-out NLL against
// the exact-density entropy, low-NFE sample quality, and adaptive-solver cost.
struct SurrogateOptions {
  std::uint64_t seed = 7;
  int steps = 20000;
  int batch = 256;
  int heldout = 2048;
  int tv_samples = 50000;
  int nfe_samples = 256;
  std::string out_dir;  // optional: dump checkpoints/CSVs here
};

struct SurrogateResult {
  double nll_per_dim = 0.0;       // ot model, exact divergence
  double entropy_per_dim = 0.0;
  double nll_gap = 0.0;           // |nll - entropy| per dim
  double tv_ot = 0.0, tv_vp = 0.0;   // midpoint nfe=8 histogram distance
  double nfe_ot = 0.0, nfe_vp = 0.0; // mean dopri5 nfe over samples
  bool pass_nll = false, pass_tv = false, pass_nfe = false;
  double seconds = 0.0;

  bool all_pass() const { return pass_nll && pass_tv && pass_nfe; }
  nlohmann::json to_json() const;
};

SurrogateResult run_checkerboard_surrogate(const SurrogateOptions& opts);

}  // namespace flowmatch
