// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowmatch/model.hpp"
#include "flowmatch/path.hpp"
#include "flowmatch/rng.hpp"

namespace flowmatch {

struct SolverCfg {
  enum class Method { euler, midpoint, rk4, dopri5 };
  Method method = Method::dopri5;
  int steps = 100;          // fixed-step methods
  double atol = 1e-5;       // dopri5
  double rtol = 1e-5;
  std::int64_t max_nfe = 1000000;

  static Method method_from_string(const std::string& s);
  static std::string method_name(Method m);
};

// NFE counts right-hand-side evaluations: euler = steps, midpoint = 2*steps,
// rk4 = 4*steps, dopri5 = 6*(accepted+rejected) + 1 (FSAL: stage 7 of an
// accepted step is stage 1 of the next; the initial-step heuristic reuses the
// first stage and costs no extra evaluation).
struct SolveReport {
  std::vector<double> y;
  std::int64_t nfe = 0;
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  bool ok = true;
  std::string error;
  // dense output at requested times: cubic Hermite between dopri5 steps,
  // piecewise linear on the fixed-step grid
  std::vector<double> dense_times;
  std::vector<std::vector<double>> dense_states;
};

using Rhs = std::function<void(double t, ConstSpan y, Span dydt)>;

SolveReport integrate(const Rhs& rhs, ConstSpan y0, double t0, double t1,
                      const SolverCfg& cfg, ConstSpan dense_times = {});

// A time-dependent field with enough structure for likelihood solves.
class VectorField {
 public:
  virtual ~VectorField() = default;
  virtual int dim() const = 0;
  virtual void eval(double t, ConstSpan x, Span out) const = 0;
  // exact divergence (trace of the spatial Jacobian)
  virtual double divergence(double t, ConstSpan x) const = 0;
  // z^T (Dv) z for the Hutchinson estimator; the default uses a central-
  // difference directional derivative (exact for fields affine in x),
  // autodiff-backed fields override it.
  virtual double hutchinson_quadratic(double t, ConstSpan x, ConstSpan z) const;
};

// Conditional path field u_t(.|x1) as a VectorField (analytic divergence).
class ConditionalPathField : public VectorField {
 public:
  ConditionalPathField(PathSchedule schedule, std::vector<double> x1);
  int dim() const override { return static_cast<int>(x1_.size()); }
  void eval(double t, ConstSpan x, Span out) const override;
  double divergence(double t, ConstSpan x) const override;

 private:
  PathSchedule schedule_;
  std::vector<double> x1_;
};

// Zero field (identity flow).
class ZeroField : public VectorField {
 public:
  explicit ZeroField(int dim) : dim_(dim) {}
  int dim() const override { return dim_; }
  void eval(double, ConstSpan, Span out) const override {
    for (double& v : out) v = 0.0;
  }
  double divergence(double, ConstSpan) const override { return 0.0; }

 private:
  int dim_;
};

// Model-backed field. Converts score/noise parameterizations to a vector
// field; divergence runs one tape forward/backward per input coordinate and
// hutchinson_quadratic one vector-Jacobian product per probe.
class ModelVectorField : public VectorField {
 public:
  ModelVectorField(const VectorFieldModel& model, PathSchedule schedule);
  int dim() const override { return model_.dim(); }
  void eval(double t, ConstSpan x, Span out) const override;
  double divergence(double t, ConstSpan x) const override;
  double hutchinson_quadratic(double t, ConstSpan x, ConstSpan z) const override;

  // batched eval for fixed-step sampling
  void eval_batch(double t, const Tensor& x, Tensor& out) const;

  // Largest time the field is defined for (schedule truncation).
  double max_time() const { return schedule_.max_time(); }

 private:
  // raw model divergence and vJp at (t,x), before parameterization conversion
  double model_divergence(double t, ConstSpan x) const;
  double model_vjp_quadratic(double t, ConstSpan x, ConstSpan z) const;

  const VectorFieldModel& model_;
  PathSchedule schedule_;
  mutable VectorFieldModel::Workspace ws_;
};

double divergence_exact(const VectorField& vf, double t, ConstSpan x);
// mean over probe rows of z^T (Dv) z
double divergence_hutchinson(const VectorField& vf, double t, ConstSpan x,
                             const std::vector<std::vector<double>>& probes);

enum class DivergenceMode { exact, hutchinson };
enum class ProbeDistribution { rademacher, gaussian };

struct LikelihoodCfg {
  SolverCfg solver;
  DivergenceMode mode = DivergenceMode::exact;
  int n_probes = 1;  // probes per solve in hutchinson mode
  ProbeDistribution probe = ProbeDistribution::rademacher;
};

struct LogLikelihoodResult {
  double logp = 0.0;
  std::int64_t nfe = 0;
  std::vector<double> x0;  // pullback of x1 to t=0
  bool ok = true;
  std::string error;
};

// log p_1(x1) by the reverse-time augmented solve (s = 1 - t substitution):
// state [x, f], dx/ds = -v(1-s, x), df/ds = +div v(1-s, x), from (x1, 0);
// log p_1(x1) = log N(x(s=1)) - f(s=1). Exact mode is deterministic; the
// probe rng is only consumed in hutchinson mode (one probe set per solve,
// fixed along the trajectory).
LogLikelihoodResult log_likelihood(const VectorField& vf, ConstSpan x1,
                                   const LikelihoodCfg& cfg,
                                   Pcg64* probe_rng = nullptr,
                                   double t_data = 1.0);

// Pixel transform between {0..255} data and [-1,1] model space.
double pixel_to_model(double v);   // v/2^7 - 1
double model_to_pixel(double y);   // 2^7 (y+1)

using LogDensityFn = std::function<double(ConstSpan x)>;

struct BpdResult {
  double bpd = 0.0;
  double log_iw = 0.0;  // logsumexp_k log p1(dequantized) - log K
};

// Importance-weighted dequantized bits-per-dimension of one quantized point:
// BPD = -[lse_k log p1((x+u_k)/2^7 - 1) - log K] / (d log 2) + 7, u_k ~ U(0,1)^d.
BpdResult bpd(const LogDensityFn& logp1, std::span<const int> pixels, int k_dequant,
              Pcg64& dequant_rng);

}  // namespace flowmatch
