// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/ode.hpp"

#include <algorithm>
#include <cmath>

#include "flowmatch/kernels.hpp"
#include "flowmatch/objectives.hpp"
#include "flowmatch/oracle.hpp"
#include "flowmatch/tape.hpp"

namespace flowmatch {

SolverCfg::Method SolverCfg::method_from_string(const std::string& s) {
  if (s == "euler") return Method::euler;
  if (s == "midpoint") return Method::midpoint;
  if (s == "rk4") return Method::rk4;
  if (s == "dopri5") return Method::dopri5;
  throw ConfigError("unknown solver method '" + s +
                    "' (expected euler, midpoint, rk4 or dopri5)");
}

std::string SolverCfg::method_name(Method m) {
  switch (m) {
    case Method::euler: return "euler";
    case Method::midpoint: return "midpoint";
    case Method::rk4: return "rk4";
    case Method::dopri5: return "dopri5";
  }
  return "?";
}

namespace {

// Dormand-Prince 5(4) tableau
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187,
                 kA53 = 64448.0 / 6561, kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33, kA63 = 46732.0 / 5247,
                 kA64 = 49.0 / 176, kA65 = -5103.0 / 18656;
constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113, kB4 = 125.0 / 192,
                 kB5 = -2187.0 / 6784, kB6 = 11.0 / 84;
constexpr double kE1 = 71.0 / 57600, kE3 = -71.0 / 16695, kE4 = 71.0 / 1920,
                 kE5 = -17253.0 / 339200, kE6 = 22.0 / 525, kE7 = -1.0 / 40;

struct DenseSink {
  ConstSpan times;
  std::size_t next = 0;
  SolveReport* report;

  void emit_linear(double ta, ConstSpan ya, double tb, ConstSpan yb) {
    while (next < times.size() && times[next] <= tb + 1e-15) {
      const double s = (tb == ta) ? 0.0 : (times[next] - ta) / (tb - ta);
      std::vector<double> y(ya.size());
      for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = ya[i] + s * (yb[i] - ya[i]);
      report->dense_times.push_back(times[next]);
      report->dense_states.push_back(std::move(y));
      ++next;
    }
  }

  // cubic Hermite with end derivatives fa, fb
  void emit_hermite(double ta, ConstSpan ya, ConstSpan fa, double tb, ConstSpan yb,
                    ConstSpan fb) {
    const double h = tb - ta;
    while (next < times.size() && times[next] <= tb + 1e-15) {
      const double s = (times[next] - ta) / h;
      const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
      const double h10 = s * (1 - s) * (1 - s);
      const double h01 = s * s * (3 - 2 * s);
      const double h11 = s * s * (s - 1);
      std::vector<double> y(ya.size());
      for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = h00 * ya[i] + h10 * h * fa[i] + h01 * yb[i] + h11 * h * fb[i];
      report->dense_times.push_back(times[next]);
      report->dense_states.push_back(std::move(y));
      ++next;
    }
  }
};

SolveReport integrate_fixed(const Rhs& rhs, ConstSpan y0, double t0, double t1,
                            const SolverCfg& cfg, ConstSpan dense_times) {
  SolveReport rep;
  const std::size_t n = y0.size();
  std::vector<double> y(y0.begin(), y0.end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), ynew(n);
  const double h = (t1 - t0) / cfg.steps;
  DenseSink sink{dense_times, 0, &rep};

  int arity = 1;
  if (cfg.method == SolverCfg::Method::midpoint) arity = 2;
  if (cfg.method == SolverCfg::Method::rk4) arity = 4;

  for (int step = 0; step < cfg.steps; ++step) {
    if (rep.nfe + arity > cfg.max_nfe) {
      rep.ok = false;
      rep.error = "max NFE exceeded";
      rep.y = y;
      return rep;
    }
    const double t = t0 + step * h;
    switch (cfg.method) {
      case SolverCfg::Method::euler: {
        rhs(t, y, k1);
        ++rep.nfe;
        for (std::size_t i = 0; i < n; ++i) ynew[i] = y[i] + h * k1[i];
        break;
      }
      case SolverCfg::Method::midpoint: {
        rhs(t, y, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        rhs(t + 0.5 * h, tmp, k2);
        rep.nfe += 2;
        for (std::size_t i = 0; i < n; ++i) ynew[i] = y[i] + h * k2[i];
        break;
      }
      case SolverCfg::Method::rk4: {
        rhs(t, y, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        rhs(t + 0.5 * h, tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        rhs(t + 0.5 * h, tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
        rhs(t + h, tmp, k4);
        rep.nfe += 4;
        for (std::size_t i = 0; i < n; ++i)
          ynew[i] = y[i] + (h / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        break;
      }
      default:
        throw Error("integrate_fixed: bad method");
    }
    ++rep.accepted;
    const double t_next = step + 1 == cfg.steps ? t1 : t + h;
    sink.emit_linear(t, y, t_next, ynew);
    y = ynew;
  }
  while (sink.next < dense_times.size() &&
         dense_times[sink.next] <= t1 + 1e-12 * std::abs(t1 - t0)) {
    rep.dense_times.push_back(dense_times[sink.next]);
    rep.dense_states.push_back(y);
    ++sink.next;
  }
  rep.y = std::move(y);
  return rep;
}

SolveReport integrate_dopri5(const Rhs& rhs, ConstSpan y0, double t0, double t1,
                             const SolverCfg& cfg, ConstSpan dense_times) {
  SolveReport rep;
  const std::size_t n = y0.size();
  const double span = t1 - t0;
  std::vector<double> y(y0.begin(), y0.end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  std::vector<double> tmp(n), ynew(n), err(n);
  DenseSink sink{dense_times, 0, &rep};

  double t = t0;
  rhs(t, y, k1);  // FSAL seed
  ++rep.nfe;

  auto scaled_rms = [&](ConstSpan v, ConstSpan ya, ConstSpan yb) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = cfg.atol + cfg.rtol * std::max(std::abs(ya[i]), std::abs(yb[i]));
      const double q = v[i] / sc;
      acc += q * q;
    }
    return std::sqrt(acc / static_cast<double>(n));
  };

  // initial step from the first derivative only (no extra evaluation)
  double h;
  {
    const double d0 = scaled_rms(y, y, y);
    const double d1 = scaled_rms(k1, y, y);
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 * span : 0.01 * (d0 / d1);
    h = std::min(h, span);
  }

  constexpr double kSafe = 0.9, kBeta = 0.04;
  constexpr double kExpo1 = 0.2 - kBeta * 0.75;
  constexpr double kFacc1 = 5.0, kFacc2 = 0.1;  // 1/min-scale, 1/max-scale
  double facold = 1e-4;
  bool last_rejected = false;

  while (t < t1) {
    if (h < 1e-14 * std::abs(span)) {
      rep.ok = false;
      rep.error = "step size underflow";
      rep.y = y;
      return rep;
    }
    if (rep.nfe + 6 > cfg.max_nfe) {
      rep.ok = false;
      rep.error = "max NFE exceeded";
      rep.y = y;
      return rep;
    }
    bool last = false;
    if (h >= t1 - t) {
      h = t1 - t;
      last = true;
    }

    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * kA21 * k1[i];
    rhs(t + kC[1] * h, tmp, k2);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (kA31 * k1[i] + kA32 * k2[i]);
    rhs(t + kC[2] * h, tmp, k3);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (kA41 * k1[i] + kA42 * k2[i] + kA43 * k3[i]);
    rhs(t + kC[3] * h, tmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (kA51 * k1[i] + kA52 * k2[i] + kA53 * k3[i] + kA54 * k4[i]);
    rhs(t + kC[4] * h, tmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (kA61 * k1[i] + kA62 * k2[i] + kA63 * k3[i] +
                           kA64 * k4[i] + kA65 * k5[i]);
    rhs(t + h, tmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      ynew[i] = y[i] + h * (kB1 * k1[i] + kB3 * k3[i] + kB4 * k4[i] +
                            kB5 * k5[i] + kB6 * k6[i]);
    rhs(t + h, ynew, k7);
    rep.nfe += 6;

    for (std::size_t i = 0; i < n; ++i)
      err[i] = h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] + kE5 * k5[i] +
                    kE6 * k6[i] + kE7 * k7[i]);
    const double errnorm = scaled_rms(err, y, ynew);

    if (errnorm <= 1.0) {
      ++rep.accepted;
      sink.emit_hermite(t, y, k1, last ? t1 : t + h, ynew, k7);
      t = last ? t1 : t + h;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      const double fac11 = std::pow(std::max(errnorm, 1e-16), kExpo1);
      double fac = fac11 / std::pow(facold, kBeta);
      fac = std::max(kFacc2, std::min(kFacc1, fac / kSafe));
      double hnew = h / fac;
      if (last_rejected) hnew = std::min(hnew, h);
      facold = std::max(errnorm, 1e-4);
      last_rejected = false;
      h = hnew;
    } else {
      ++rep.rejected;
      const double fac11 = std::pow(errnorm, kExpo1);
      h = h / std::min(kFacc1, fac11 / kSafe);
      last_rejected = true;
    }
  }
  // flush dense times that coincide with the terminal point
  while (sink.next < dense_times.size() &&
         dense_times[sink.next] <= t1 + 1e-12 * std::abs(span)) {
    rep.dense_times.push_back(dense_times[sink.next]);
    rep.dense_states.push_back(y);
    ++sink.next;
  }
  rep.y = std::move(y);
  return rep;
}

}  // namespace

SolveReport integrate(const Rhs& rhs, ConstSpan y0, double t0, double t1,
                      const SolverCfg& cfg, ConstSpan dense_times) {
  FM_CHECK(t1 > t0, ConfigError, "integrate: need t1 > t0 (reverse-time solves ",
           "go through the s = 1-t substitution), got [", t0, ",", t1, "]");
  FM_CHECK(cfg.steps >= 1, ConfigError, "integrate: steps must be >= 1");
  FM_CHECK(cfg.atol > 0.0 && cfg.rtol > 0.0, ConfigError,
           "integrate: atol and rtol must be positive");
  for (std::size_t i = 1; i < dense_times.size(); ++i)
    FM_CHECK(dense_times[i] >= dense_times[i - 1], ConfigError,
             "integrate: dense_times must be sorted");
  if (cfg.method == SolverCfg::Method::dopri5)
    return integrate_dopri5(rhs, y0, t0, t1, cfg, dense_times);
  return integrate_fixed(rhs, y0, t0, t1, cfg, dense_times);
}

double VectorField::hutchinson_quadratic(double t, ConstSpan x, ConstSpan z) const {
  // central-difference directional derivative; exact for fields affine in x
  double xn = 0.0;
  for (double v : x) xn += v * v;
  const double h = 1e-5 * (1.0 + std::sqrt(xn));
  std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] += h * z[i];
    xm[i] -= h * z[i];
  }
  std::vector<double> vp(x.size()), vm(x.size());
  eval(t, xp, vp);
  eval(t, xm, vm);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += z[i] * (vp[i] - vm[i]) / (2.0 * h);
  return acc;
}

ConditionalPathField::ConditionalPathField(PathSchedule schedule,
                                           std::vector<double> x1)
    : schedule_(schedule), x1_(std::move(x1)) {}

void ConditionalPathField::eval(double t, ConstSpan x, Span out) const {
  conditional_vf(schedule_, t, x, x1_, out);
}

double ConditionalPathField::divergence(double t, ConstSpan) const {
  return conditional_divergence(schedule_, t, dim());
}

ModelVectorField::ModelVectorField(const VectorFieldModel& model,
                                   PathSchedule schedule)
    : model_(model), schedule_(schedule) {
  if (model_.config().parameterization != Parameterization::vector_field)
    FM_CHECK(schedule_.kind == PathKind::vp, ConfigError,
             "score/noise parameterized sampling is vp-specific");
}

void ModelVectorField::eval(double t, ConstSpan x, Span out) const {
  std::vector<double> raw(x.size());
  model_.forward_inference(t, x, raw, ws_);
  to_vector_field(model_.config().parameterization, schedule_, t, x, raw, out);
}

void ModelVectorField::eval_batch(double t, const Tensor& x, Tensor& out) const {
  const std::vector<double> tb(x.rows(), t);
  if (model_.config().parameterization == Parameterization::vector_field) {
    model_.forward_inference(tb, x, out, ws_);
    return;
  }
  Tensor raw;
  model_.forward_inference(tb, x, raw, ws_);
  if (out.shape() != x.shape()) out = Tensor::zeros(x.shape());
  const std::int64_t d = x.cols();
  for (std::int64_t r = 0; r < x.rows(); ++r)
    to_vector_field(model_.config().parameterization, schedule_, t,
                    ConstSpan(x.data() + r * d, d), ConstSpan(raw.data() + r * d, d),
                    Span(out.data() + r * d, d));
}

double ModelVectorField::model_divergence(double t, ConstSpan x) const {
  // one forward/backward pass per input coordinate
  const int d = model_.dim();
  Tensor xb = Tensor::zeros({1, d});
  for (int i = 0; i < d; ++i) xb[i] = x[i];
  const std::vector<double> tb(1, t);
  double trace = 0.0;
  for (int i = 0; i < d; ++i) {
    Tape tape;
    auto binding = model_.forward(tape, tb, xb, /*x_requires_grad=*/true);
    Tensor onehot = Tensor::zeros({1, d});
    onehot[i] = 1.0;
    const Var root = tape.sum(tape.mul(binding.out, tape.constant(onehot)));
    Gradients grads = tape.backward(root);
    trace += grads.get(binding.x)[i];
  }
  return trace;
}

double ModelVectorField::model_vjp_quadratic(double t, ConstSpan x,
                                             ConstSpan z) const {
  const int d = model_.dim();
  Tensor xb = Tensor::zeros({1, d});
  Tensor zb = Tensor::zeros({1, d});
  for (int i = 0; i < d; ++i) {
    xb[i] = x[i];
    zb[i] = z[i];
  }
  const std::vector<double> tb(1, t);
  Tape tape;
  auto binding = model_.forward(tape, tb, xb, /*x_requires_grad=*/true);
  const Var root = tape.sum(tape.mul(binding.out, tape.constant(zb)));
  Gradients grads = tape.backward(root);
  const Tensor& vjp = grads.get(binding.x);
  double acc = 0.0;
  for (int i = 0; i < d; ++i) acc += vjp[i] * z[i];
  return acc;
}

double ModelVectorField::divergence(double t, ConstSpan x) const {
  const double raw = model_divergence(t, x);
  const int d = model_.dim();
  switch (model_.config().parameterization) {
    case Parameterization::vector_field:
      return raw;
    case Parameterization::score: {
      const double c = 0.5 * schedule_.vp_beta(1.0 - t);
      return c * (d + raw);
    }
    case Parameterization::noise: {
      const double c = 0.5 * schedule_.vp_beta(1.0 - t);
      const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
      const MeanStd ms = mean_std(schedule_, t, origin);
      return c * (d - raw / ms.sigma);
    }
  }
  return raw;
}

double ModelVectorField::hutchinson_quadratic(double t, ConstSpan x,
                                              ConstSpan z) const {
  const double raw = model_vjp_quadratic(t, x, z);
  double zz = 0.0;
  for (double v : z) zz += v * v;
  switch (model_.config().parameterization) {
    case Parameterization::vector_field:
      return raw;
    case Parameterization::score: {
      const double c = 0.5 * schedule_.vp_beta(1.0 - t);
      return c * (zz + raw);
    }
    case Parameterization::noise: {
      const double c = 0.5 * schedule_.vp_beta(1.0 - t);
      const std::vector<double> origin(x.size(), 0.0);
      const MeanStd ms = mean_std(schedule_, t, origin);
      return c * (zz - raw / ms.sigma);
    }
  }
  return raw;
}

double divergence_exact(const VectorField& vf, double t, ConstSpan x) {
  return vf.divergence(t, x);
}

double divergence_hutchinson(const VectorField& vf, double t, ConstSpan x,
                             const std::vector<std::vector<double>>& probes) {
  FM_CHECK(!probes.empty(), ConfigError, "hutchinson: need at least one probe");
  double acc = 0.0;
  for (const auto& z : probes) acc += vf.hutchinson_quadratic(t, x, z);
  return acc / static_cast<double>(probes.size());
}

LogLikelihoodResult log_likelihood(const VectorField& vf, ConstSpan x1,
                                   const LikelihoodCfg& cfg, Pcg64* probe_rng,
                                   double t_data) {
  const int d = vf.dim();
  FM_CHECK(static_cast<int>(x1.size()) == d, ShapeError, "log_likelihood: point has dim ",
           x1.size(), " but field has dim ", d);

  std::vector<std::vector<double>> probes;
  if (cfg.mode == DivergenceMode::hutchinson) {
    FM_CHECK(probe_rng != nullptr, ConfigError,
             "hutchinson mode needs a probe rng");
    FM_CHECK(cfg.n_probes >= 1, ConfigError, "hutchinson: n_probes must be >= 1");
    probes.resize(cfg.n_probes, std::vector<double>(d));
    for (auto& z : probes)
      for (double& v : z)
        v = cfg.probe == ProbeDistribution::rademacher
                ? (probe_rng->next_u64() & 1 ? 1.0 : -1.0)
                : probe_rng->next_normal();
  }

  // augmented reverse-time system in s = 1 - t, from s0 = 1 - t_data to 1
  const Rhs rhs = [&](double s, ConstSpan ys, Span dy) {
    const double t = 1.0 - s;
    ConstSpan x(ys.data(), d);
    Span dx(dy.data(), d);
    vf.eval(t, x, dx);
    for (int i = 0; i < d; ++i) dx[i] = -dx[i];
    dy[d] = cfg.mode == DivergenceMode::exact
                ? vf.divergence(t, x)
                : divergence_hutchinson(vf, t, x, probes);
  };

  std::vector<double> y0(d + 1, 0.0);
  for (int i = 0; i < d; ++i) y0[i] = x1[i];
  const SolveReport rep = integrate(rhs, y0, 1.0 - t_data, 1.0, cfg.solver);

  LogLikelihoodResult out;
  out.nfe = rep.nfe;
  out.ok = rep.ok;
  out.error = rep.error;
  if (!rep.ok) return out;
  out.x0.assign(rep.y.begin(), rep.y.begin() + d);
  out.logp = standard_normal_logpdf(out.x0) - rep.y[d];
  return out;
}

double pixel_to_model(double v) { return std::ldexp(v, -7) - 1.0; }
double model_to_pixel(double y) { return std::ldexp(y + 1.0, 7); }

BpdResult bpd(const LogDensityFn& logp1, std::span<const int> pixels, int k_dequant,
              Pcg64& dequant_rng) {
  FM_CHECK(k_dequant >= 1, ConfigError, "bpd: K must be >= 1, got ", k_dequant);
  const std::size_t d = pixels.size();
  for (int p : pixels)
    FM_CHECK(p >= 0 && p <= 255, DomainError, "bpd: pixel value ", p,
             " outside {0..255}");

  std::vector<double> logps(k_dequant);
  std::vector<double> y(d);
  for (int kq = 0; kq < k_dequant; ++kq) {
    for (std::size_t i = 0; i < d; ++i)
      y[i] = pixel_to_model(static_cast<double>(pixels[i]) +
                            dequant_rng.next_double());
    logps[kq] = logp1(y);
  }
  const double m = *std::max_element(logps.begin(), logps.end());
  double acc = 0.0;
  for (double lp : logps) acc += std::exp(lp - m);
  const double lse = m + std::log(acc);

  BpdResult out;
  out.log_iw = lse - std::log(static_cast<double>(k_dequant));
  out.bpd = -out.log_iw / (static_cast<double>(d) * std::log(2.0)) + 7.0;
  return out;
}

}  // namespace flowmatch
