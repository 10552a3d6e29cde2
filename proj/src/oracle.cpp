// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flowmatch {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

double log_gaussian(ConstSpan x, ConstSpan mu, double sigma) {
  const auto d = static_cast<double>(x.size());
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = x[i] - mu[i];
    q += z * z;
  }
  return -0.5 * d * std::log(kTwoPi * sigma * sigma) - 0.5 * q / (sigma * sigma);
}

double logsumexp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}
}  // namespace

double standard_normal_logpdf(ConstSpan x) {
  double q = 0.0;
  for (double v : x) q += v * v;
  return -0.5 * static_cast<double>(x.size()) * std::log(kTwoPi) - 0.5 * q;
}

MixtureOracle::MixtureOracle(std::vector<std::vector<double>> points,
                             std::vector<double> weights, PathSchedule schedule)
    : points_(std::move(points)),
      weights_(std::move(weights)),
      schedule_(schedule) {
  FM_CHECK(!points_.empty(), ConfigError, "oracle needs at least one data point");
  FM_CHECK(points_.size() <= 64, ConfigError, "oracle dataset capped at 64 points, got ",
           points_.size());
  FM_CHECK(points_.size() == weights_.size(), ConfigError, "oracle: ",
           points_.size(), " points but ", weights_.size(), " weights");
  dim_ = static_cast<int>(points_[0].size());
  for (const auto& p : points_)
    FM_CHECK(static_cast<int>(p.size()) == dim_, ShapeError,
             "oracle: inconsistent point dimensions");
  double wsum = 0.0;
  for (double w : weights_) {
    FM_CHECK(w >= 0.0, ConfigError, "oracle: negative weight ", w);
    wsum += w;
  }
  FM_CHECK(std::abs(wsum - 1.0) <= 1e-12, ConfigError,
           "oracle: weights sum to ", wsum, ", expected 1 +- 1e-12");
}

MixtureOracle MixtureOracle::uniform(std::vector<std::vector<double>> points,
                                     PathSchedule schedule) {
  const double w = 1.0 / static_cast<double>(points.size());
  return MixtureOracle(std::move(points), std::vector<double>(points.size(), w),
                       schedule);
}

void MixtureOracle::posterior(double t, ConstSpan x,
                              std::vector<double>& log_terms) const {
  log_terms.resize(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const MeanStd ms = mean_std(schedule_, t, points_[i]);
    log_terms[i] = std::log(weights_[i]) + log_gaussian(x, ms.mu, ms.sigma);
  }
}

double MixtureOracle::log_marginal_density(double t, ConstSpan x) const {
  std::vector<double> log_terms;
  posterior(t, x, log_terms);
  return logsumexp(log_terms);
}

std::vector<double> MixtureOracle::posterior_weights(double t, ConstSpan x) const {
  std::vector<double> log_terms;
  posterior(t, x, log_terms);
  const double lse = logsumexp(log_terms);
  std::vector<double> out(log_terms.size());
  for (std::size_t i = 0; i < log_terms.size(); ++i)
    out[i] = std::exp(log_terms[i] - lse);
  return out;
}

double MixtureOracle::marginal_density(double t, ConstSpan x) const {
  return std::exp(log_marginal_density(t, x));
}

void MixtureOracle::marginal_vf(double t, ConstSpan x, Span out) const {
  std::vector<double> log_terms;
  posterior(t, x, log_terms);
  const double lse = logsumexp(log_terms);
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> u(dim_);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const double gamma = std::exp(log_terms[i] - lse);
    conditional_vf(schedule_, t, x, points_[i], u);
    for (int j = 0; j < dim_; ++j) out[j] += gamma * u[j];
  }
}

void MixtureOracle::marginal_score(double t, ConstSpan x, Span out) const {
  std::vector<double> log_terms;
  posterior(t, x, log_terms);
  const double lse = logsumexp(log_terms);
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> sc(dim_);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const double gamma = std::exp(log_terms[i] - lse);
    conditional_score(schedule_, t, x, points_[i], sc);
    for (int j = 0; j < dim_; ++j) out[j] += gamma * sc[j];
  }
}

namespace {

// SDE coefficients in diffusion time s (data at s=0, noise at s=1).
// vp: f_s(y) = -(T'(s)/2) y,  g_s^2 = T'(s)
// ve: f_s(y) = 0,             g_s^2 = d/ds sigma_s^2 = 2 sigma_s sigma'_s
void diffusion_drift(const PathSchedule& sch, double s, ConstSpan y, Span out) {
  switch (sch.kind) {
    case PathKind::vp: {
      const double c = -0.5 * sch.vp_beta(s);
      for (std::size_t i = 0; i < y.size(); ++i) out[i] = c * y[i];
      break;
    }
    case PathKind::ve:
      std::fill(out.begin(), out.end(), 0.0);
      break;
    case PathKind::ot:
      throw DomainError("probability-flow field: ot path has no SDE form");
  }
}

double diffusion_g_sq(const PathSchedule& sch, double s) {
  switch (sch.kind) {
    case PathKind::vp:
      return sch.vp_beta(s);
    case PathKind::ve:
      return 2.0 * sch.ve_sigma(s) * sch.ve_dsigma(s);
    case PathKind::ot:
      throw DomainError("probability-flow field: ot path has no SDE form");
  }
  return 0.0;
}

}  // namespace

void probability_flow_vf_conditional(const PathSchedule& s, double t, ConstSpan x,
                                     ConstSpan x1, Span out) {
  FM_CHECK(s.kind != PathKind::ot, DomainError,
           "probability-flow field unsupported for ot (no SDE form)");
  s.validate_time(t);
  const double u = 1.0 - t;  // diffusion time
  // w_s = f_s - (g_s^2/2) grad log p_s(.|x1); p_s in diffusion time equals the
  // FM-time path at 1-s, so the conditional score at FM time t serves directly.
  std::vector<double> drift(x.size()), score(x.size());
  diffusion_drift(s, u, x, drift);
  conditional_score(s, t, x, x1, score);
  const double half_gsq = 0.5 * diffusion_g_sq(s, u);
  // reversal: utilde_t(x) = -w_{1-t}(x)
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = -(drift[i] - half_gsq * score[i]);
}

void MixtureOracle::probability_flow_vf(double t, ConstSpan x, Span out) const {
  FM_CHECK(schedule_.kind != PathKind::ot, DomainError,
           "probability-flow field unsupported for ot (no SDE form)");
  schedule_.validate_time(t);
  const double u = 1.0 - t;
  std::vector<double> drift(x.size()), score(x.size());
  diffusion_drift(schedule_, u, x, drift);
  marginal_score(t, x, score);
  const double half_gsq = 0.5 * diffusion_g_sq(schedule_, u);
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = -(drift[i] - half_gsq * score[i]);
}

void reversed_marginal_vf(const MixtureOracle& oracle, double t, ConstSpan x,
                          Span out) {
  oracle.marginal_vf(1.0 - t, x, out);
  for (double& v : out) v = -v;
}

double GridSpec::spacing(int axis) const {
  return (hi[axis] - lo[axis]) / static_cast<double>(n[axis] - 1);
}

double GridSpec::dt() const { return times[1] - times[0]; }

void GridSpec::validate() const {
  FM_CHECK(!n.empty() && n.size() <= 3, ConfigError,
           "grid supports 1 to 3 spatial dimensions, got ", n.size());
  FM_CHECK(lo.size() == n.size() && hi.size() == n.size(), ConfigError,
           "grid bounds/points size mismatch");
  for (std::size_t a = 0; a < n.size(); ++a) {
    FM_CHECK(n[a] >= 3, ConfigError, "grid too coarse: axis ", a, " has ", n[a],
             " points, central stencils need >= 3");
    FM_CHECK(hi[a] > lo[a], ConfigError, "grid axis ", a, " has empty extent");
  }
  FM_CHECK(times.size() >= 3, ConfigError, "grid needs >= 3 time slices, got ",
           times.size());
  const double dt0 = times[1] - times[0];
  for (std::size_t k = 1; k + 1 < times.size(); ++k)
    FM_CHECK(std::abs((times[k + 1] - times[k]) - dt0) <= 1e-12 * std::abs(dt0),
             ConfigError, "grid time slices must be uniformly spaced");
}

GridSpec GridSpec::refined() const {
  GridSpec g = *this;
  for (auto& v : g.n) v = 2 * v - 1;
  const double t0 = times.front();
  const double dt_half = 0.5 * dt();
  g.times.resize(2 * times.size() - 1);
  for (std::size_t k = 0; k < g.times.size(); ++k)
    g.times[k] = t0 + static_cast<double>(k) * dt_half;
  return g;
}

ResidualReport continuity_residual(const DensityFn& density, const FieldFn& vf,
                                   const GridSpec& grid) {
  grid.validate();
  const int d = grid.dim();
  const std::size_t nt = grid.times.size();

  std::vector<std::int64_t> stride(d, 1);
  std::int64_t total = 1;
  for (int a = d - 1; a >= 0; --a) {
    stride[a] = total;
    total *= grid.n[a];
  }

  auto coords = [&](std::int64_t flat, std::vector<double>& x,
                    std::vector<int>& idx) {
    for (int a = 0; a < d; ++a) {
      idx[a] = static_cast<int>((flat / stride[a]) % grid.n[a]);
      x[a] = grid.lo[a] + idx[a] * grid.spacing(a);
    }
  };

  // flux[k][a][point] = p * u_a at time slice k
  std::vector<std::vector<std::vector<double>>> flux(
      nt, std::vector<std::vector<double>>(d, std::vector<double>(total)));
  std::vector<std::vector<double>> dens(nt, std::vector<double>(total));

  std::vector<double> x(d), u(d);
  std::vector<int> idx(d);
  for (std::size_t k = 0; k < nt; ++k) {
    for (std::int64_t f = 0; f < total; ++f) {
      coords(f, x, idx);
      const double p = density(grid.times[k], x);
      vf(grid.times[k], x, u);
      dens[k][f] = p;
      for (int a = 0; a < d; ++a) flux[k][a][f] = p * u[a];
    }
  }

  ResidualReport rep;
  rep.dt = grid.dt();
  for (int a = 0; a < d; ++a) rep.h = std::max(rep.h, grid.spacing(a));
  rep.h_sq = rep.h * rep.h;

  double sum_abs = 0.0;
  for (std::size_t k = 1; k + 1 < nt; ++k) {
    for (std::int64_t f = 0; f < total; ++f) {
      coords(f, x, idx);
      bool interior = true;
      for (int a = 0; a < d; ++a)
        if (idx[a] == 0 || idx[a] == grid.n[a] - 1) interior = false;
      if (!interior) continue;

      double res = (dens[k + 1][f] - dens[k - 1][f]) / (2.0 * rep.dt);
      for (int a = 0; a < d; ++a) {
        const double ha = grid.spacing(a);
        res += (flux[k][a][f + stride[a]] - flux[k][a][f - stride[a]]) / (2.0 * ha);
      }
      const double r = std::abs(res);
      rep.max_abs = std::max(rep.max_abs, r);
      sum_abs += r;
      ++rep.interior_points;
    }
  }
  FM_CHECK(rep.interior_points > 0, ConfigError,
           "grid too coarse: no interior points");
  rep.mean_abs = sum_abs / static_cast<double>(rep.interior_points);
  return rep;
}

ResidualReport continuity_residual(const MixtureOracle& oracle,
                                   const GridSpec& grid) {
  return continuity_residual(
      [&](double t, ConstSpan x) { return oracle.marginal_density(t, x); },
      [&](double t, ConstSpan x, Span out) { oracle.marginal_vf(t, x, out); },
      grid);
}

ResidualReport reversed_continuity_residual(const MixtureOracle& oracle,
                                            const GridSpec& grid) {
  return continuity_residual(
      [&](double t, ConstSpan x) { return oracle.marginal_density(1.0 - t, x); },
      [&](double t, ConstSpan x, Span out) { reversed_marginal_vf(oracle, t, x, out); },
      grid);
}

void write_residual_csv(std::ostream& os,
                        const std::vector<std::pair<double, ResidualReport>>& rows) {
  os << "t,grid_h,max_residual,mean_residual\n";
  for (const auto& [t, rep] : rows)
    os << t << "," << rep.h << "," << rep.max_abs << "," << rep.mean_abs << "\n";
}

}  // namespace flowmatch
