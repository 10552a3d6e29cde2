// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flowmatch/model.hpp"
#include "flowmatch/oracle.hpp"
#include "flowmatch/path.hpp"
#include "flowmatch/tape.hpp"

namespace flowmatch {

// Training losses. Every per-sample regression target is built from
// (schedule, t, x0, x1) alone; the marginal quantities only appear in the
// exact-FM quadrature used for verification.
//
// Score convention: "score" always means grad_x log p. The score-matching
// targets, the noise->score conversion and the score->field conversion all
// use this convention consistently.

struct LossOnTape {
  Var loss;                          // scalar, tape-attached
  VectorFieldModel::TapeBinding binding;
  std::vector<double> per_sample;    // detached per-row losses (weights applied)
};

// mean_b || v(t_b, psi_t(x0_b)) - dpsi/dt(x0_b) ||^2
LossOnTape cfm_loss(Tape& tape, const VectorFieldModel& model,
                    const PathSchedule& schedule, const Tensor& x1,
                    const Tensor& x0, ConstSpan t);

// mean_b lambda(t_b) || s(t_b, x_b) - grad log p_t(x_b|x1_b) ||^2,
// lambda = sigma_t^2 (score_matching) or beta(1-t) (score_flow).
LossOnTape sm_loss(Tape& tape, const VectorFieldModel& model,
                   const PathSchedule& schedule, const Tensor& x1,
                   const Tensor& x0, ConstSpan t);
LossOnTape scoreflow_loss(Tape& tape, const VectorFieldModel& model,
                          const PathSchedule& schedule, const Tensor& x1,
                          const Tensor& x0, ConstSpan t);

// mean_b || eps(t_b, psi_t(x0_b)) - x0_b ||^2
LossOnTape ddpm_loss(Tape& tape, const VectorFieldModel& model,
                     const PathSchedule& schedule, const Tensor& x1,
                     const Tensor& x0, ConstSpan t);

// Tensor-product quadrature over (t, x): midpoint rule in time (nt nodes on
// (0,1)) and a cell-centered spatial grid.
struct QuadratureGrid {
  int nt = 41;
  std::vector<double> lo = {-4.0, -4.0};
  std::vector<double> hi = {4.0, 4.0};
  std::vector<int> nx = {81, 81};

  std::int64_t n_space() const;
  double cell_volume() const;
  double time_node(int k) const { return (k + 0.5) / static_cast<double>(nt); }
};

// Quadrature losses are evaluated slice by slice (one tape per time node) so
// the result is the loss value plus accumulated parameter gradients rather
// than a single live tape node.
struct QuadratureLoss {
  double value = 0.0;
  std::vector<Tensor> grads;       // aligned with model.parameters()
  double worst_weight_dev = 0.0;   // max_t |sum_g p_t(x_g) dV - 1|
  bool under_resolved = false;     // worst_weight_dev > 1e-2
};

// E_{t, p_t} || v - u_t ||^2 against the oracle marginal field.
QuadratureLoss fm_loss_exact(const VectorFieldModel& model,
                             const MixtureOracle& oracle,
                             const QuadratureGrid& grid);

// E_{t, x1, p_t(.|x1)} || v - u_t(.|x1) ||^2 on the same (t, x) nodes.
QuadratureLoss cfm_loss_quadrature(const VectorFieldModel& model,
                                   const MixtureOracle& oracle,
                                   const QuadratureGrid& grid);

// Parameterization conversions so every sampler consumes one field interface.
// score -> field is vp-specific: v(x) = (T'(1-t)/2) (x + s(x)).
void score_to_vf(const PathSchedule& s, double t, ConstSpan x, ConstSpan score,
                 Span out);
// s(x) = -eps(x) / sigma_t
void noise_to_score(const PathSchedule& s, double t, ConstSpan eps, Span out);
// Dispatch on the model parameterization; identity for vector_field.
void to_vector_field(Parameterization p, const PathSchedule& s, double t,
                     ConstSpan x, ConstSpan model_out, Span out);

}  // namespace flowmatch
