// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "flowmatch/common.hpp"

#include "json.hpp"

namespace flowmatch {

// Gaussian conditional probability paths p_t(x|x1) = N(x | mu_t(x1), sigma_t^2 I)
// on the convention t=0 noise, t=1 data. Three schedules:
//
//   ot: mu_t = t*x1, sigma_t = 1 - (1 - sigma_min) t; defined on all of [0,1].
//   vp: mu_t = alpha_{1-t} x1, sigma_t = sqrt(1 - alpha_{1-t}^2) with
//       alpha_s = exp(-T(s)/2), T(s) = s*beta_min + s^2 (beta_max - beta_min)/2.
//       Valid for t in [0, 1 - t_eps]; sigma_t -> 0 as t -> 1.
//   ve: mu_t = x1, sigma_t = sigma(1-t) with geometric
//       sigma(s) = sigma_small * (sigma_large/sigma_small)^s. sigma_0 here is
//       sigma_large >> 1 (not 1), and sigma_small > 0 replaces the exact-zero
//       endpoint to avoid the sigma=0 singularity. Same [0, 1 - t_eps] domain
//       guard as vp.
enum class PathKind { ot, vp, ve };

struct PathSchedule {
  PathKind kind = PathKind::ot;
  double sigma_min = 1e-5;      // ot terminal std
  double beta_min = 0.1;        // vp noise-scale endpoints
  double beta_max = 20.0;
  double ve_sigma_small = 0.01; // ve geometric endpoints
  double ve_sigma_large = 50.0;
  double t_eps = 1e-5;          // vp/ve truncation at the data end

  static PathSchedule ot(double sigma_min = 1e-5);
  static PathSchedule vp(double beta_min = 0.1, double beta_max = 20.0);
  static PathSchedule ve(double sigma_small = 0.01, double sigma_large = 50.0);

  // Largest valid time: 1 for ot, 1 - t_eps for vp/ve.
  double max_time() const;
  void validate_time(double t) const;

  // VP helpers in diffusion time s (noise at s=1 under the FM convention).
  double vp_T(double s) const;
  double vp_beta(double s) const;   // T'(s)
  double vp_alpha(double s) const;  // exp(-T(s)/2)

  // VE noise scale in diffusion time s and its s-derivative.
  double ve_sigma(double s) const;
  double ve_dsigma(double s) const;

  nlohmann::json to_json() const;
  static PathSchedule from_json(const nlohmann::json& j);
};

std::string to_string(PathKind kind);
PathKind path_kind_from_string(const std::string& s);

// mu_t(x1), sigma_t(x1) and their exact time derivatives.
struct MeanStd {
  std::vector<double> mu;
  std::vector<double> dmu;
  double sigma = 0.0;
  double dsigma = 0.0;
};

MeanStd mean_std(const PathSchedule& s, double t, ConstSpan x1);

// x_t = psi_t(x0) = sigma_t(x1) x0 + mu_t(x1)
void conditional_flow(const PathSchedule& s, double t, ConstSpan x0, ConstSpan x1,
                      Span out);

// d/dt psi_t(x0) = sigma'_t(x1) x0 + mu'_t(x1); the CFM regression target.
void flow_time_derivative(const PathSchedule& s, double t, ConstSpan x0,
                          ConstSpan x1, Span out);

// u_t(x|x1) = (sigma'_t/sigma_t)(x - mu_t) + mu'_t. The general form; it is
// the authoritative one, the closed forms below must agree with it.
void conditional_vf(const PathSchedule& s, double t, ConstSpan x, ConstSpan x1,
                    Span out);

// Schedule-specific closed forms of the same field.
void conditional_vf_closed(const PathSchedule& s, double t, ConstSpan x,
                           ConstSpan x1, Span out);

// grad_x log p_t(x|x1) = -(x - mu_t(x1)) / sigma_t(x1)^2
void conditional_score(const PathSchedule& s, double t, ConstSpan x, ConstSpan x1,
                       Span out);

// div_x u_t(x|x1) = d * sigma'_t / sigma_t (the field is affine in x).
double conditional_divergence(const PathSchedule& s, double t, int dim);

}  // namespace flowmatch
