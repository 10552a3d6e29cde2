// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/path.hpp"

#include <cmath>

namespace flowmatch {

PathSchedule PathSchedule::ot(double sigma_min) {
  FM_CHECK(sigma_min > 0.0, ConfigError, "ot schedule needs sigma_min > 0, got ",
           sigma_min);
  PathSchedule s;
  s.kind = PathKind::ot;
  s.sigma_min = sigma_min;
  return s;
}

PathSchedule PathSchedule::vp(double beta_min, double beta_max) {
  FM_CHECK(beta_min > 0.0 && beta_max > beta_min, ConfigError,
           "vp schedule needs 0 < beta_min < beta_max, got ", beta_min, ", ",
           beta_max);
  PathSchedule s;
  s.kind = PathKind::vp;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  return s;
}

PathSchedule PathSchedule::ve(double sigma_small, double sigma_large) {
  FM_CHECK(sigma_small > 0.0 && sigma_large > sigma_small, ConfigError,
           "ve schedule needs 0 < sigma_small < sigma_large, got ", sigma_small,
           ", ", sigma_large);
  PathSchedule s;
  s.kind = PathKind::ve;
  s.ve_sigma_small = sigma_small;
  s.ve_sigma_large = sigma_large;
  return s;
}

double PathSchedule::max_time() const {
  return kind == PathKind::ot ? 1.0 : 1.0 - t_eps;
}

void PathSchedule::validate_time(double t) const {
  const double hi = max_time();
  if (t >= 0.0 && t <= hi) return;
  if (kind == PathKind::ot)
    throw DomainError(concat_msg("ot schedule: t=", t, " outside [0,1]"));
  throw DomainError(concat_msg(to_string(kind), " schedule: t=", t,
                               " outside [0,1-t_eps] with t_eps=", t_eps,
                               " (time-truncated at the data end)"));
}

double PathSchedule::vp_T(double s) const {
  return s * beta_min + 0.5 * s * s * (beta_max - beta_min);
}

double PathSchedule::vp_beta(double s) const {
  return beta_min + s * (beta_max - beta_min);
}

double PathSchedule::vp_alpha(double s) const { return std::exp(-0.5 * vp_T(s)); }

double PathSchedule::ve_sigma(double s) const {
  return ve_sigma_small * std::pow(ve_sigma_large / ve_sigma_small, s);
}

double PathSchedule::ve_dsigma(double s) const {
  return ve_sigma(s) * std::log(ve_sigma_large / ve_sigma_small);
}

std::string to_string(PathKind kind) {
  switch (kind) {
    case PathKind::ot: return "ot";
    case PathKind::vp: return "vp";
    case PathKind::ve: return "ve";
  }
  return "?";
}

PathKind path_kind_from_string(const std::string& s) {
  if (s == "ot") return PathKind::ot;
  if (s == "vp") return PathKind::vp;
  if (s == "ve") return PathKind::ve;
  throw ConfigError("unknown schedule kind '" + s + "' (expected ot, vp or ve)");
}

nlohmann::json PathSchedule::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  switch (kind) {
    case PathKind::ot:
      j["sigma_min"] = sigma_min;
      break;
    case PathKind::vp:
      j["beta_min"] = beta_min;
      j["beta_max"] = beta_max;
      j["t_eps"] = t_eps;
      break;
    case PathKind::ve:
      j["sigma_small"] = ve_sigma_small;
      j["sigma_large"] = ve_sigma_large;
      j["t_eps"] = t_eps;
      break;
  }
  return j;
}

PathSchedule PathSchedule::from_json(const nlohmann::json& j) {
  FM_CHECK(j.contains("kind"), ConfigError, "schedule config missing key 'kind'");
  const PathKind kind = path_kind_from_string(j.at("kind").get<std::string>());
  PathSchedule s;
  switch (kind) {
    case PathKind::ot:
      s = PathSchedule::ot(j.value("sigma_min", 1e-5));
      break;
    case PathKind::vp:
      s = PathSchedule::vp(j.value("beta_min", 0.1), j.value("beta_max", 20.0));
      s.t_eps = j.value("t_eps", 1e-5);
      break;
    case PathKind::ve:
      s = PathSchedule::ve(j.value("sigma_small", 0.01), j.value("sigma_large", 50.0));
      s.t_eps = j.value("t_eps", 1e-5);
      break;
  }
  return s;
}

MeanStd mean_std(const PathSchedule& s, double t, ConstSpan x1) {
  s.validate_time(t);
  const std::size_t d = x1.size();
  MeanStd out;
  out.mu.resize(d);
  out.dmu.resize(d);
  switch (s.kind) {
    case PathKind::ot: {
      for (std::size_t i = 0; i < d; ++i) {
        out.mu[i] = t * x1[i];
        out.dmu[i] = x1[i];
      }
      out.sigma = 1.0 - (1.0 - s.sigma_min) * t;
      out.dsigma = -(1.0 - s.sigma_min);
      break;
    }
    case PathKind::vp: {
      const double u = 1.0 - t;  // diffusion time
      const double alpha = s.vp_alpha(u);
      // d/dt alpha(1-t) = (T'(1-t)/2) alpha(1-t)
      const double dalpha_dt = 0.5 * s.vp_beta(u) * alpha;
      const double sigma = std::sqrt(1.0 - alpha * alpha);
      for (std::size_t i = 0; i < d; ++i) {
        out.mu[i] = alpha * x1[i];
        out.dmu[i] = dalpha_dt * x1[i];
      }
      out.sigma = sigma;
      // d/dt sigma^2 = -2 alpha * dalpha_dt
      out.dsigma = -alpha * dalpha_dt / sigma;
      break;
    }
    case PathKind::ve: {
      const double u = 1.0 - t;
      for (std::size_t i = 0; i < d; ++i) {
        out.mu[i] = x1[i];
        out.dmu[i] = 0.0;
      }
      out.sigma = s.ve_sigma(u);
      out.dsigma = -s.ve_dsigma(u);
      break;
    }
  }
  FM_CHECK(out.sigma > 0.0, DomainError, to_string(s.kind),
           " schedule: sigma_t <= 0 at t=", t);
  return out;
}

void conditional_flow(const PathSchedule& s, double t, ConstSpan x0, ConstSpan x1,
                      Span out) {
  FM_CHECK(x0.size() == x1.size(), ShapeError, "conditional_flow: dim(x0)=",
           x0.size(), " != dim(x1)=", x1.size());
  const MeanStd ms = mean_std(s, t, x1);
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = ms.sigma * x0[i] + ms.mu[i];
}

void flow_time_derivative(const PathSchedule& s, double t, ConstSpan x0,
                          ConstSpan x1, Span out) {
  FM_CHECK(x0.size() == x1.size(), ShapeError, "flow_time_derivative: dim(x0)=",
           x0.size(), " != dim(x1)=", x1.size());
  const MeanStd ms = mean_std(s, t, x1);
  for (std::size_t i = 0; i < x0.size(); ++i)
    out[i] = ms.dsigma * x0[i] + ms.dmu[i];
}

void conditional_vf(const PathSchedule& s, double t, ConstSpan x, ConstSpan x1,
                    Span out) {
  FM_CHECK(x.size() == x1.size(), ShapeError, "conditional_vf: dim(x)=", x.size(),
           " != dim(x1)=", x1.size());
  const MeanStd ms = mean_std(s, t, x1);
  const double ratio = ms.dsigma / ms.sigma;
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = ratio * (x[i] - ms.mu[i]) + ms.dmu[i];
}

void conditional_vf_closed(const PathSchedule& s, double t, ConstSpan x,
                           ConstSpan x1, Span out) {
  FM_CHECK(x.size() == x1.size(), ShapeError, "conditional_vf_closed: dim(x)=",
           x.size(), " != dim(x1)=", x1.size());
  s.validate_time(t);
  switch (s.kind) {
    case PathKind::ot: {
      const double denom = 1.0 - (1.0 - s.sigma_min) * t;
      FM_CHECK(denom > 0.0, DomainError, "ot closed form: sigma_t <= 0 at t=", t);
      for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = (x1[i] - (1.0 - s.sigma_min) * x[i]) / denom;
      break;
    }
    case PathKind::vp: {
      const double u = 1.0 - t;
      const double T = s.vp_T(u);
      const double Tp = s.vp_beta(u);
      const double emT = std::exp(-T);
      const double emT2 = std::exp(-0.5 * T);
      const double denom = 1.0 - emT;
      FM_CHECK(denom > 0.0, DomainError, "vp closed form: singular at t=", t);
      for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = -0.5 * Tp * (emT * x[i] - emT2 * x1[i]) / denom;
      break;
    }
    case PathKind::ve: {
      const double u = 1.0 - t;
      const double sig = s.ve_sigma(u);
      const double dsig = s.ve_dsigma(u);
      for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = -(dsig / sig) * (x[i] - x1[i]);
      break;
    }
  }
}

void conditional_score(const PathSchedule& s, double t, ConstSpan x, ConstSpan x1,
                       Span out) {
  FM_CHECK(x.size() == x1.size(), ShapeError, "conditional_score: dim(x)=",
           x.size(), " != dim(x1)=", x1.size());
  const MeanStd ms = mean_std(s, t, x1);
  const double inv_var = 1.0 / (ms.sigma * ms.sigma);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = -(x[i] - ms.mu[i]) * inv_var;
}

double conditional_divergence(const PathSchedule& s, double t, int dim) {
  const std::vector<double> origin(static_cast<std::size_t>(dim), 0.0);
  const MeanStd ms = mean_std(s, t, origin);
  return dim * ms.dsigma / ms.sigma;
}

}  // namespace flowmatch
