// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "flowmatch/path.hpp"

namespace flowmatch {

// Exact marginal quantities for a finite dataset under a Gaussian conditional
// path: p_t(x) = sum_i w_i N(x | mu_t(x1_i), sigma_t(x1_i)^2 I), the
// posterior-weighted marginal vector field and score. All mixture arithmetic
// runs in log space (sigma_min-scale components underflow plain sums near
// t=1). Ground truth for the verification harness, not a production path;
// datasets are capped at 64 points.
class MixtureOracle {
 public:
  MixtureOracle(std::vector<std::vector<double>> points,
                std::vector<double> weights, PathSchedule schedule);
  static MixtureOracle uniform(std::vector<std::vector<double>> points,
                               PathSchedule schedule);

  int dim() const { return dim_; }
  std::size_t size() const { return points_.size(); }
  const PathSchedule& schedule() const { return schedule_; }
  const std::vector<std::vector<double>>& points() const { return points_; }

  double log_marginal_density(double t, ConstSpan x) const;
  double marginal_density(double t, ConstSpan x) const;
  void marginal_vf(double t, ConstSpan x, Span out) const;
  void marginal_score(double t, ConstSpan x, Span out) const;
  // gamma_i = w_i p_t(x|x1_i) / p_t(x)
  std::vector<double> posterior_weights(double t, ConstSpan x) const;

  // Probability-flow field w = f - (g^2/2) grad log p built from the
  // diffusion-time SDE coefficients and then time-reversed; an independent
  // derivation route that must coincide with the marginal/conditional VF for
  // vp and ve. Throws DomainError for ot (no SDE form).
  void probability_flow_vf(double t, ConstSpan x, Span out) const;

 private:
  void posterior(double t, ConstSpan x, std::vector<double>& log_terms) const;

  std::vector<std::vector<double>> points_;
  std::vector<double> weights_;
  PathSchedule schedule_;
  int dim_;
};

// Conditional (single-x1) version of the probability-flow route.
void probability_flow_vf_conditional(const PathSchedule& s, double t, ConstSpan x,
                                     ConstSpan x1, Span out);

// Reversal: utilde_t(x) = -u_{1-t}(x) generates ptilde_t(x) = p_{1-t}(x).
void reversed_marginal_vf(const MixtureOracle& oracle, double t, ConstSpan x,
                          Span out);

// Tensor grid for PDE residuals, d <= 3. Times must be uniformly spaced;
// at least 3 points per axis and 3 time slices (central stencils).
struct GridSpec {
  std::vector<double> lo, hi;
  std::vector<int> n;
  std::vector<double> times;

  int dim() const { return static_cast<int>(n.size()); }
  double spacing(int axis) const;
  double dt() const;
  void validate() const;
  GridSpec refined() const;  // halves h and dt (2n-1 points, 2K-1 slices)
};

struct ResidualReport {
  double max_abs = 0.0;
  double mean_abs = 0.0;
  double h = 0.0;       // largest spatial spacing
  double h_sq = 0.0;    // discretization scale of the stencil
  double dt = 0.0;
  std::int64_t interior_points = 0;
};

using DensityFn = std::function<double(double t, ConstSpan x)>;
using FieldFn = std::function<void(double t, ConstSpan x, Span out)>;

// max/mean |d/dt p + div(p u)| over the grid interior, central differences in
// both t and x.
ResidualReport continuity_residual(const DensityFn& density, const FieldFn& vf,
                                   const GridSpec& grid);
ResidualReport continuity_residual(const MixtureOracle& oracle,
                                   const GridSpec& grid);
// Residual of the reversed pair (p_{1-t}, -u_{1-t}).
ResidualReport reversed_continuity_residual(const MixtureOracle& oracle,
                                            const GridSpec& grid);

void write_residual_csv(std::ostream& os,
                        const std::vector<std::pair<double, ResidualReport>>& rows);

double standard_normal_logpdf(ConstSpan x);

}  // namespace flowmatch
