// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowmatch/common.hpp"

namespace flowmatch {

// PCG64 (pcg_setseq_128_xsl_rr_64): 128-bit LCG state advanced first, then
// XSL-RR output of the new state. The raw 64-bit stream is identical to
// numpy.random.PCG64 given the same (state, inc); reference vectors live in
// tests/test_rng.cpp.
//
// All project randomness flows from one root seed through named substreams:
//   state0 = root_seed ^ (0x9E3779B97F4A7C15 * stream_id)
//   four successive splitmix64 outputs from state0 form
//   initstate = (o0 << 64) | o1 and initseq = (o2 << 64) | o3,
// then PCG seeding is state = ((0 * M + inc) + initstate) * M + inc with
// inc = (initseq << 1) | 1. Stream ids: data=1, init=2, batch=3, probes=4,
// dequant=5.
class Pcg64 {
 public:
  using u128 = unsigned __int128;

  Pcg64(u128 initstate, u128 initseq);

  static Pcg64 substream(std::uint64_t root_seed, std::uint64_t stream_id);

  std::uint64_t next_u64();

  // 53-bit mantissa uniform in [0, 1)
  double next_double();
  // uniform in [lo, hi)
  double next_uniform(double lo, double hi);
  // standard normal via Box-Muller (pair cached)
  double next_normal();
  // uniform integer in [0, n) via modulo; callers keep n a power of two or
  // tolerate the (tiny) bias for non-critical choices
  std::uint64_t next_below(std::uint64_t n);

  void fill_normal(Span out);
  void fill_uniform(Span out);

  u128 state() const { return state_; }
  u128 inc() const { return inc_; }

 private:
  u128 state_;
  u128 inc_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

struct Substream {
  static constexpr std::uint64_t data = 1;
  static constexpr std::uint64_t init = 2;
  static constexpr std::uint64_t batch = 3;
  static constexpr std::uint64_t probes = 4;
  static constexpr std::uint64_t dequant = 5;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace flowmatch
