// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "flowmatch/rng.hpp"
#include "flowmatch/tensor.hpp"

namespace flowmatch {

// 2D toy densities with exact samplers.
//
// checkerboard: uniform over the 8 cells {(i,j): 0 <= i,j < 4, i+j even} of
//   the 4x4 unit-cell partition of [-2,2]^2; density 1/8 on support, exact
//   log-density available (differential entropy log 8).
// eight_gaussians: equal mixture of N(c_k, 0.1^2 I) at radius 2, angles k*pi/4.
// two_moons: two interleaved half circles (radius 1, N(0, 0.1^2) jitter),
//   no closed-form density.
enum class ToyKind { checkerboard, eight_gaussians, two_moons };

std::string to_string(ToyKind k);
ToyKind toy_kind_from_string(const std::string& s);

class ToyDataset {
 public:
  explicit ToyDataset(ToyKind kind) : kind_(kind) {}

  ToyKind kind() const { return kind_; }
  static constexpr int dim() { return 2; }

  void sample(Pcg64& rng, Tensor& out) const;             // fills [n x 2]
  Tensor sample(Pcg64& rng, int n) const;

  bool has_exact_density() const;
  double log_density(ConstSpan x) const;  // -inf off support
  double density(ConstSpan x) const;
  // differential entropy in nats (exact-density datasets only)
  double entropy() const;

  // [xlo, xhi, ylo, yhi] such that samples always fall inside
  std::array<double, 4> support_bounds() const;

 private:
  ToyKind kind_;
};

// n x d integer dataset in {0..255}: draws from a fixed two-component
// Gaussian mixture in model space [-1,1]^d, mapped through 2^7 (y+1) and
// floored/clamped to pixels. sigma = 0 collapses the mixture to its centers
// (the all-128 fixture when center_scale = 0).
std::vector<std::vector<int>> quantized_synthetic(int d, int n, Pcg64& rng,
                                                  double center_scale = 0.35,
                                                  double sigma = 0.15);

// exact model-space log density of the generating mixture (BPD fixtures)
double quantized_synthetic_log_density(ConstSpan y, double center_scale = 0.35,
                                       double sigma = 0.15);

// CSV dump/load with a `# kind,seed,n` header line for reproducibility.
void dump_csv(std::ostream& os, ToyKind kind, std::uint64_t seed, const Tensor& points);
Tensor load_csv(std::istream& is);

}  // namespace flowmatch
