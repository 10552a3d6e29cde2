// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/objectives.hpp"

#include <cmath>

#include "flowmatch/kernels.hpp"

namespace flowmatch {

namespace {

void check_batch(const Tensor& x1, const Tensor& x0, ConstSpan t, int dim) {
  FM_CHECK(x1.rank() == 2 && x0.rank() == 2 && x1.same_shape(x0), ShapeError,
           "loss batch: x1 ", x1.shape_str(), " and x0 ", x0.shape_str(),
           " must both be [B,d]");
  FM_CHECK(x1.cols() == dim, ShapeError, "loss batch: data dim ", x1.cols(),
           " != model dim ", dim);
  FM_CHECK(static_cast<std::int64_t>(t.size()) == x1.rows(), ShapeError,
           "loss batch: ", t.size(), " times for ", x1.rows(), " rows");
}

// per-row squared norms of (weighted) diff, for the detached per-sample view
std::vector<double> row_sq_norms(const Tensor& m) {
  std::vector<double> out(m.rows());
  for (std::int64_t r = 0; r < m.rows(); ++r)
    out[r] = kernels::sum_sq(m.data() + r * m.cols(), m.cols());
  return out;
}

struct BatchPaths {
  Tensor xt;      // psi_t(x0)
  Tensor target;  // objective-specific regression target
};

enum class TargetKind { flow_derivative, score, noise };

BatchPaths build_batch(const PathSchedule& schedule, const Tensor& x1,
                       const Tensor& x0, ConstSpan t, TargetKind kind) {
  const std::int64_t batch = x1.rows();
  const std::int64_t d = x1.cols();
  BatchPaths bp;
  bp.xt = Tensor::zeros({batch, d});
  bp.target = Tensor::zeros({batch, d});
  for (std::int64_t b = 0; b < batch; ++b) {
    ConstSpan x1b(x1.data() + b * d, d);
    ConstSpan x0b(x0.data() + b * d, d);
    Span xtb(bp.xt.data() + b * d, d);
    Span tgt(bp.target.data() + b * d, d);
    conditional_flow(schedule, t[b], x0b, x1b, xtb);
    switch (kind) {
      case TargetKind::flow_derivative:
        flow_time_derivative(schedule, t[b], x0b, x1b, tgt);
        break;
      case TargetKind::score:
        conditional_score(schedule, t[b], xtb, x1b, tgt);
        break;
      case TargetKind::noise:
        for (std::int64_t j = 0; j < d; ++j) tgt[j] = x0b[j];
        break;
    }
  }
  return bp;
}

LossOnTape weighted_regression(Tape& tape, const VectorFieldModel& model,
                               const BatchPaths& bp, ConstSpan t,
                               const std::vector<double>* lambda) {
  const std::int64_t batch = bp.xt.rows();
  LossOnTape out;
  out.binding = model.forward(tape, t, bp.xt);
  Var diff = tape.sub(out.binding.out, tape.constant(bp.target));
  if (lambda) {
    Tensor w = Tensor::zeros(bp.xt.shape());
    for (std::int64_t b = 0; b < batch; ++b) {
      const double sw = std::sqrt((*lambda)[b]);
      for (std::int64_t j = 0; j < bp.xt.cols(); ++j) w.at(b, j) = sw;
    }
    diff = tape.mul(diff, tape.constant(w));
  }
  out.loss = tape.smul(tape.squared_l2(diff), 1.0 / static_cast<double>(batch));
  out.per_sample = row_sq_norms(tape.value(diff));
  return out;
}

}  // namespace

LossOnTape cfm_loss(Tape& tape, const VectorFieldModel& model,
                    const PathSchedule& schedule, const Tensor& x1,
                    const Tensor& x0, ConstSpan t) {
  FM_CHECK(model.config().parameterization == Parameterization::vector_field,
           ConfigError, "cfm_loss requires a vector_field model, got ",
           to_string(model.config().parameterization));
  check_batch(x1, x0, t, model.dim());
  const BatchPaths bp =
      build_batch(schedule, x1, x0, t, TargetKind::flow_derivative);
  return weighted_regression(tape, model, bp, t, nullptr);
}

LossOnTape sm_loss(Tape& tape, const VectorFieldModel& model,
                   const PathSchedule& schedule, const Tensor& x1,
                   const Tensor& x0, ConstSpan t) {
  FM_CHECK(model.config().parameterization == Parameterization::score, ConfigError,
           "sm_loss requires a score model, got ",
           to_string(model.config().parameterization));
  check_batch(x1, x0, t, model.dim());
  const BatchPaths bp = build_batch(schedule, x1, x0, t, TargetKind::score);
  // lambda(t) = sigma_t^2
  std::vector<double> lambda(t.size());
  for (std::size_t b = 0; b < t.size(); ++b) {
    ConstSpan x1b(x1.data() + static_cast<std::int64_t>(b) * x1.cols(), x1.cols());
    const MeanStd ms = mean_std(schedule, t[b], x1b);
    lambda[b] = ms.sigma * ms.sigma;
  }
  return weighted_regression(tape, model, bp, t, &lambda);
}

LossOnTape scoreflow_loss(Tape& tape, const VectorFieldModel& model,
                          const PathSchedule& schedule, const Tensor& x1,
                          const Tensor& x0, ConstSpan t) {
  FM_CHECK(model.config().parameterization == Parameterization::score, ConfigError,
           "scoreflow_loss requires a score model, got ",
           to_string(model.config().parameterization));
  FM_CHECK(schedule.kind == PathKind::vp, ConfigError,
           "scoreflow weighting beta(1-t) is defined for the vp schedule");
  check_batch(x1, x0, t, model.dim());
  const BatchPaths bp = build_batch(schedule, x1, x0, t, TargetKind::score);
  std::vector<double> lambda(t.size());
  for (std::size_t b = 0; b < t.size(); ++b)
    lambda[b] = schedule.vp_beta(1.0 - t[b]);
  return weighted_regression(tape, model, bp, t, &lambda);
}

LossOnTape ddpm_loss(Tape& tape, const VectorFieldModel& model,
                     const PathSchedule& schedule, const Tensor& x1,
                     const Tensor& x0, ConstSpan t) {
  FM_CHECK(model.config().parameterization == Parameterization::noise, ConfigError,
           "ddpm_loss requires a noise model, got ",
           to_string(model.config().parameterization));
  check_batch(x1, x0, t, model.dim());
  const BatchPaths bp = build_batch(schedule, x1, x0, t, TargetKind::noise);
  return weighted_regression(tape, model, bp, t, nullptr);
}

std::int64_t QuadratureGrid::n_space() const {
  std::int64_t n = 1;
  for (int v : nx) n *= v;
  return n;
}

double QuadratureGrid::cell_volume() const {
  double v = 1.0;
  for (std::size_t a = 0; a < nx.size(); ++a)
    v *= (hi[a] - lo[a]) / static_cast<double>(nx[a]);
  return v;
}

namespace {

Tensor quadrature_nodes(const QuadratureGrid& grid) {
  const int d = static_cast<int>(grid.nx.size());
  const std::int64_t total = grid.n_space();
  Tensor nodes = Tensor::zeros({total, d});
  std::vector<std::int64_t> stride(d, 1);
  std::int64_t acc = 1;
  for (int a = d - 1; a >= 0; --a) {
    stride[a] = acc;
    acc *= grid.nx[a];
  }
  for (std::int64_t f = 0; f < total; ++f) {
    for (int a = 0; a < d; ++a) {
      const auto idx = (f / stride[a]) % grid.nx[a];
      const double step = (grid.hi[a] - grid.lo[a]) / grid.nx[a];
      nodes.at(f, a) = grid.lo[a] + (static_cast<double>(idx) + 0.5) * step;
    }
  }
  return nodes;
}

void accumulate_grads(std::vector<Tensor>& acc, const Gradients& grads,
                      const VectorFieldModel::TapeBinding& binding,
                      const VectorFieldModel& model) {
  if (acc.empty())
    for (const Tensor* p : model.parameters()) acc.push_back(Tensor::zeros(p->shape()));
  std::size_t slot = 0;
  for (std::size_t l = 0; l < binding.weights.size(); ++l) {
    const Tensor& gw = grads.get(binding.weights[l]);
    kernels::add(acc[slot].data(), gw.data(), acc[slot].data(), gw.numel());
    ++slot;
    const Tensor& gb = grads.get(binding.biases[l]);
    kernels::add(acc[slot].data(), gb.data(), acc[slot].data(), gb.numel());
    ++slot;
  }
}

// One weighted-regression slice: loss += sum_g w_g ||v(t, x_g) - u_g||^2.
void quadrature_slice(const VectorFieldModel& model, double t,
                      const Tensor& nodes, const Tensor& targets,
                      const std::vector<double>& w, QuadratureLoss& out) {
  const std::int64_t total = nodes.rows();
  const std::int64_t d = nodes.cols();
  Tape tape;
  std::vector<double> tb(total, t);
  auto binding = model.forward(tape, tb, nodes);
  Var diff = tape.sub(binding.out, tape.constant(targets));
  Tensor sqw = Tensor::zeros(nodes.shape());
  for (std::int64_t g = 0; g < total; ++g) {
    const double sw = std::sqrt(w[g]);
    for (std::int64_t j = 0; j < d; ++j) sqw.at(g, j) = sw;
  }
  Var loss = tape.squared_l2(tape.mul(diff, tape.constant(sqw)));
  out.value += tape.value(loss).value();
  Gradients grads = tape.backward(loss);
  accumulate_grads(out.grads, grads, binding, model);
}

}  // namespace

QuadratureLoss fm_loss_exact(const VectorFieldModel& model,
                             const MixtureOracle& oracle,
                             const QuadratureGrid& grid) {
  FM_CHECK(oracle.dim() <= 2, ConfigError,
           "fm_loss_exact quadrature supports d <= 2, got d=", oracle.dim());
  FM_CHECK(static_cast<int>(grid.nx.size()) == oracle.dim(), ConfigError,
           "quadrature grid dim ", grid.nx.size(), " != oracle dim ", oracle.dim());
  const Tensor nodes = quadrature_nodes(grid);
  const std::int64_t total = nodes.rows();
  const int d = oracle.dim();
  const double dv = grid.cell_volume();
  const double tw = 1.0 / static_cast<double>(grid.nt);

  QuadratureLoss out;
  Tensor targets = Tensor::zeros(nodes.shape());
  std::vector<double> w(total);
  std::vector<double> u(d);
  for (int kk = 0; kk < grid.nt; ++kk) {
    const double t = grid.time_node(kk);
    double wsum = 0.0;
    for (std::int64_t g = 0; g < total; ++g) {
      ConstSpan xg(nodes.data() + g * d, d);
      const double p = oracle.marginal_density(t, xg);
      w[g] = p * dv * tw;
      wsum += p * dv;
      oracle.marginal_vf(t, xg, u);
      for (int j = 0; j < d; ++j) targets.at(g, j) = u[j];
    }
    out.worst_weight_dev = std::max(out.worst_weight_dev, std::abs(wsum - 1.0));
    quadrature_slice(model, t, nodes, targets, w, out);
  }
  out.under_resolved = out.worst_weight_dev > 1e-2;
  return out;
}

QuadratureLoss cfm_loss_quadrature(const VectorFieldModel& model,
                                   const MixtureOracle& oracle,
                                   const QuadratureGrid& grid) {
  FM_CHECK(oracle.dim() <= 2, ConfigError,
           "cfm quadrature supports d <= 2, got d=", oracle.dim());
  FM_CHECK(static_cast<int>(grid.nx.size()) == oracle.dim(), ConfigError,
           "quadrature grid dim ", grid.nx.size(), " != oracle dim ", oracle.dim());
  const Tensor nodes = quadrature_nodes(grid);
  const std::int64_t total = nodes.rows();
  const int d = oracle.dim();
  const double dv = grid.cell_volume();
  const double tw = 1.0 / static_cast<double>(grid.nt);
  const double wi = 1.0 / static_cast<double>(oracle.size());

  QuadratureLoss out;
  Tensor targets = Tensor::zeros(nodes.shape());
  std::vector<double> w(total);
  std::vector<double> u(d), mu_zero(d, 0.0);
  for (int kk = 0; kk < grid.nt; ++kk) {
    const double t = grid.time_node(kk);
    double wsum = 0.0;
    for (const auto& x1 : oracle.points()) {
      const MeanStd ms = mean_std(oracle.schedule(), t, x1);
      for (std::int64_t g = 0; g < total; ++g) {
        ConstSpan xg(nodes.data() + g * d, d);
        double q = 0.0;
        for (int j = 0; j < d; ++j) {
          const double z = xg[j] - ms.mu[j];
          q += z * z;
        }
        const double logp = -0.5 * d * std::log(2.0 * M_PI * ms.sigma * ms.sigma) -
                            0.5 * q / (ms.sigma * ms.sigma);
        const double p = std::exp(logp);
        w[g] = wi * p * dv * tw;
        wsum += wi * p * dv;
        conditional_vf(oracle.schedule(), t, xg, x1, u);
        for (int j = 0; j < d; ++j) targets.at(g, j) = u[j];
      }
      quadrature_slice(model, t, nodes, targets, w, out);
    }
    out.worst_weight_dev = std::max(out.worst_weight_dev, std::abs(wsum - 1.0));
  }
  out.under_resolved = out.worst_weight_dev > 1e-2;
  return out;
}

void score_to_vf(const PathSchedule& s, double t, ConstSpan x, ConstSpan score,
                 Span out) {
  FM_CHECK(s.kind == PathKind::vp, ConfigError,
           "score -> field conversion is vp-specific; unsupported for ",
           to_string(s.kind));
  s.validate_time(t);
  const double c = 0.5 * s.vp_beta(1.0 - t);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * (x[i] + score[i]);
}

void noise_to_score(const PathSchedule& s, double t, ConstSpan eps, Span out) {
  const std::vector<double> origin(eps.size(), 0.0);
  const MeanStd ms = mean_std(s, t, origin);
  for (std::size_t i = 0; i < eps.size(); ++i) out[i] = -eps[i] / ms.sigma;
}

void to_vector_field(Parameterization p, const PathSchedule& s, double t,
                     ConstSpan x, ConstSpan model_out, Span out) {
  switch (p) {
    case Parameterization::vector_field:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = model_out[i];
      break;
    case Parameterization::score:
      score_to_vf(s, t, x, model_out, out);
      break;
    case Parameterization::noise: {
      std::vector<double> score(x.size());
      noise_to_score(s, t, model_out, score);
      score_to_vf(s, t, x, score, out);
      break;
    }
  }
}

}  // namespace flowmatch
