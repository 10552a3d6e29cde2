// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/rng.hpp"

#include <cmath>

namespace flowmatch {

namespace {
constexpr Pcg64::u128 kMult =
    (Pcg64::u128(0x2360ed051fc65da4ull) << 64) | 0x4385df649fccf645ull;

inline std::uint64_t rotr64(std::uint64_t v, unsigned rot) {
  return (v >> rot) | (v << ((64u - rot) & 63u));
}
}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Pcg64::Pcg64(u128 initstate, u128 initseq) {
  inc_ = (initseq << 1) | 1u;
  state_ = 0;
  state_ = state_ * kMult + inc_;
  state_ += initstate;
  state_ = state_ * kMult + inc_;
}

Pcg64 Pcg64::substream(std::uint64_t root_seed, std::uint64_t stream_id) {
  std::uint64_t s = root_seed ^ (0x9E3779B97F4A7C15ull * stream_id);
  const std::uint64_t o0 = splitmix64(s);
  const std::uint64_t o1 = splitmix64(s);
  const std::uint64_t o2 = splitmix64(s);
  const std::uint64_t o3 = splitmix64(s);
  return Pcg64((u128(o0) << 64) | o1, (u128(o2) << 64) | o3);
}

std::uint64_t Pcg64::next_u64() {
  state_ = state_ * kMult + inc_;
  const std::uint64_t xored =
      static_cast<std::uint64_t>(state_ >> 64) ^ static_cast<std::uint64_t>(state_);
  const unsigned rot = static_cast<unsigned>(state_ >> 122);
  return rotr64(xored, rot);
}

double Pcg64::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Pcg64::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

double Pcg64::next_normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // u1 in (0,1] so log is finite
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

std::uint64_t Pcg64::next_below(std::uint64_t n) { return next_u64() % n; }

void Pcg64::fill_normal(Span out) {
  for (double& v : out) v = next_normal();
}

void Pcg64::fill_uniform(Span out) {
  for (double& v : out) v = next_double();
}

}  // namespace flowmatch
