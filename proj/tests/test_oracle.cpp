// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "flowmatch/oracle.hpp"
#include "flowmatch/rng.hpp"

using namespace flowmatch;

namespace {

GridSpec grid2d(int n, double tc, double dt, double extent) {
  GridSpec g;
  g.lo = {-extent, -extent};
  g.hi = {extent, extent};
  g.n = {n, n};
  g.times = {tc - 2 * dt, tc - dt, tc, tc + dt, tc + 2 * dt};
  return g;
}

double gaussian_pdf(ConstSpan x, ConstSpan mu, double sigma) {
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    q += (x[i] - mu[i]) * (x[i] - mu[i]);
  const double d = static_cast<double>(x.size());
  return std::exp(-0.5 * q / (sigma * sigma)) /
         std::pow(2.0 * M_PI * sigma * sigma, d / 2.0);
}

}  // namespace

TEST_CASE("oracle construction contracts") {
  CHECK_THROWS_AS(MixtureOracle({{0.0, 0.0}}, {0.5}, PathSchedule::ot(1e-5)),
                  ConfigError);  // weights must sum to 1
  CHECK_THROWS_AS(MixtureOracle({}, {}, PathSchedule::ot(1e-5)), ConfigError);
  std::vector<std::vector<double>> many(65, {0.0, 0.0});
  CHECK_THROWS_AS(MixtureOracle::uniform(many, PathSchedule::ot(1e-5)),
                  ConfigError);  // n <= 64
}

TEST_CASE("single-point dataset collapses to the conditional") {
  const PathSchedule sch = PathSchedule::ot(1e-3);
  const std::vector<double> x1 = {0.4, -0.9};
  const MixtureOracle oracle = MixtureOracle::uniform({x1}, sch);
  Pcg64 rng = Pcg64::substream(55, 1);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> x = {2 * rng.next_normal(), 2 * rng.next_normal()};
    const double t = rng.next_uniform(0.0, 1.0);
    const MeanStd ms = mean_std(sch, t, x1);

    // density equals the conditional gaussian
    CHECK(oracle.marginal_density(t, x) ==
          doctest::Approx(gaussian_pdf(x, ms.mu, ms.sigma)).epsilon(1e-12));

    // field equals the conditional field through the same code path
    std::vector<double> um(2), uc(2), sm(2), sc(2);
    oracle.marginal_vf(t, x, um);
    conditional_vf(sch, t, x, x1, uc);
    oracle.marginal_score(t, x, sm);
    conditional_score(sch, t, x, x1, sc);
    for (int j = 0; j < 2; ++j) {
      CHECK(std::abs(um[j] - uc[j]) <= 1e-15 * (std::abs(uc[j]) + 1.0));
      CHECK(std::abs(sm[j] - sc[j]) <= 1e-15 * (std::abs(sc[j]) + 1.0));
    }
  }
}

TEST_CASE("noise end is standard normal for ot mixtures") {
  const MixtureOracle oracle = MixtureOracle::uniform(
      {{1.0, 2.0}, {-0.5, 0.3}, {0.2, -1.7}}, PathSchedule::ot(1e-5));
  Pcg64 rng = Pcg64::substream(56, 1);
  std::vector<double> zero(2, 0.0);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> x = {rng.next_normal(), rng.next_normal()};
    CHECK(oracle.marginal_density(0.0, x) ==
          doctest::Approx(gaussian_pdf(x, zero, 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("narrow data-end mixture vanishes between the points") {
  const MixtureOracle oracle = MixtureOracle::uniform(
      {{1.0, 0.0}, {-1.0, 0.0}}, PathSchedule::ot(1e-4));
  const std::vector<double> origin = {0.0, 0.0};
  CHECK(oracle.marginal_density(1.0, origin) < 1e-300);
  // but log-space arithmetic keeps the log density finite and ordered
  CHECK(oracle.log_marginal_density(1.0, origin) <
        oracle.log_marginal_density(1.0, std::vector<double>{1.0, 1e-5}));
}

TEST_CASE("symmetric two-point mixture pulls towards the mean at t=0") {
  const MixtureOracle oracle = MixtureOracle::uniform(
      {{1.5, 0.7}, {-1.5, -0.7}}, PathSchedule::ot(1e-5));
  Pcg64 rng = Pcg64::substream(57, 1);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> x = {rng.next_normal(), rng.next_normal()};
    std::vector<double> u(2);
    oracle.marginal_vf(0.0, x, u);
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(u[j] + x[j]) <= 1e-4 * (std::abs(x[j]) + 1.0));
  }
}

TEST_CASE("marginal field matches an independent non-log-space summation") {
  const std::vector<std::vector<double>> pts = {{0.8, -0.2}, {-0.6, 1.1}, {0.1, 0.4}};
  for (const auto& sch : {PathSchedule::ot(1e-5), PathSchedule::vp()}) {
    const MixtureOracle oracle = MixtureOracle::uniform(pts, sch);
    Pcg64 rng = Pcg64::substream(58, 1);
    for (int i = 0; i < 100; ++i) {
      const std::vector<double> x = {1.5 * rng.next_normal(), 1.5 * rng.next_normal()};
      const double t = rng.next_uniform(0.05, 0.9);

      // direct quadrature of the posterior-weighted sum, no log-sum-exp
      double psum = 0.0;
      std::vector<double> acc(2, 0.0), u(2);
      for (const auto& x1 : pts) {
        const MeanStd ms = mean_std(sch, t, x1);
        const double p = gaussian_pdf(x, ms.mu, ms.sigma) / 3.0;
        conditional_vf(sch, t, x, x1, u);
        for (int j = 0; j < 2; ++j) acc[j] += p * u[j];
        psum += p;
      }
      for (int j = 0; j < 2; ++j) acc[j] /= psum;

      std::vector<double> um(2);
      oracle.marginal_vf(t, x, um);
      for (int j = 0; j < 2; ++j)
        CHECK(std::abs(um[j] - acc[j]) <= 1e-12 * (std::abs(acc[j]) + 1.0));
      CHECK(oracle.marginal_density(t, x) == doctest::Approx(psum).epsilon(1e-12));
    }
  }
}

TEST_CASE("marginal score matches finite differences of the log density") {
  const MixtureOracle oracle = MixtureOracle::uniform(
      {{1.0, 1.0}, {-1.0, 0.5}, {0.0, -1.2}, {0.7, 0.0}}, PathSchedule::vp());
  Pcg64 rng = Pcg64::substream(59, 1);
  const double h = 1e-5;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x = {1.5 * rng.next_normal(), 1.5 * rng.next_normal()};
    const double t = rng.next_uniform(0.05, 0.95);
    std::vector<double> score(2);
    oracle.marginal_score(t, x, score);
    for (int j = 0; j < 2; ++j) {
      std::vector<double> xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (oracle.log_marginal_density(t, xp) -
                         oracle.log_marginal_density(t, xm)) /
                        (2 * h);
      CHECK(std::abs(score[j] - fd) <=
            1e-6 * (std::max(std::abs(score[j]), std::abs(fd)) + 1e-3));
    }
  }
  // t=0 ot: standard normal score is -x
  const MixtureOracle ot0 = MixtureOracle::uniform({{1.0, -1.0}}, PathSchedule::ot(1e-5));
  std::vector<double> s(2);
  ot0.marginal_score(0.0, std::vector<double>{0.3, -0.8}, s);
  CHECK(s[0] == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("continuity residual converges at second order") {
  // the spec headline geometry: slices around t=0.5 over [-3,3]^2.
  // the ratio (theorem content) holds there; the absolute level is checked on
  // the conditioned grid (sigma_t = 0.8) where the stencil resolves the flux.
  const MixtureOracle single =
      MixtureOracle::uniform({{0.3, -0.5}}, PathSchedule::ot(1e-5));
  const ResidualReport mid64 = continuity_residual(single, grid2d(65, 0.5, 5e-4, 3.0));
  const ResidualReport mid128 =
      continuity_residual(single, grid2d(129, 0.5, 2.5e-4, 3.0));
  const double ratio = mid64.max_abs / mid128.max_abs;
  CHECK(ratio >= 2.5);
  CHECK(ratio <= 6.0);

  const ResidualReport cond =
      continuity_residual(single, grid2d(129, 0.2, 2.5e-4, 2.0));
  CHECK(cond.max_abs < 1e-3);
  CHECK(cond.interior_points > 0);
  CHECK(cond.h_sq == doctest::Approx(cond.h * cond.h));

  // vp mixture at the same resolution
  const MixtureOracle vp4 = MixtureOracle::uniform(
      {{1.0, 1.0}, {-1.0, 1.0}, {1.0, -1.0}, {-1.0, -1.0}}, PathSchedule::vp());
  CHECK(continuity_residual(vp4, grid2d(129, 0.2, 2.5e-4, 2.0)).max_abs < 1e-3);

  // ve at a time where its noise scale is 0.5: the field magnitude carries a
  // log(sigma_large/sigma_small) factor, so only the convergence order is
  // asserted here
  const PathSchedule ve = PathSchedule::ve();
  const double t_ve = 1.0 - std::log(0.5 / 0.01) / std::log(50.0 / 0.01);
  const MixtureOracle ve2 =
      MixtureOracle::uniform({{1.0, 0.0}, {-1.0, 0.0}}, ve);
  const double rc = continuity_residual(ve2, grid2d(65, t_ve, 5e-4, 2.0)).max_abs;
  const double rf = continuity_residual(ve2, grid2d(129, t_ve, 2.5e-4, 2.0)).max_abs;
  CHECK(rc / rf >= 2.5);
  CHECK(rc / rf <= 6.0);
}

TEST_CASE("continuity residual rejects a wrong field") {
  const MixtureOracle oracle =
      MixtureOracle::uniform({{0.3, -0.5}}, PathSchedule::ot(1e-5));
  const auto density = [&](double t, ConstSpan x) {
    return oracle.marginal_density(t, x);
  };
  const FieldFn drifted = [&](double t, ConstSpan x, Span out) {
    oracle.marginal_vf(t, x, out);
    out[0] += 0.5;  // constant drift violates the PDE
  };
  const ResidualReport rep =
      continuity_residual(density, drifted, grid2d(65, 0.2, 5e-4, 2.0));
  CHECK(rep.max_abs > 1e-2);
}

TEST_CASE("continuity residual in one dimension") {
  GridSpec g;
  g.lo = {-2.0};
  g.hi = {2.0};
  g.n = {257};
  g.times = {0.1995, 0.2, 0.2005};
  const MixtureOracle oracle =
      MixtureOracle::uniform({{0.5}, {-0.5}}, PathSchedule::ot(1e-5));
  CHECK(continuity_residual(oracle, g).max_abs < 1e-3);
}

TEST_CASE("grid validation") {
  GridSpec g;
  g.lo = {-1.0};
  g.hi = {1.0};
  g.n = {2};
  g.times = {0.1, 0.2, 0.3};
  CHECK_THROWS_WITH_AS(g.validate(), doctest::Contains("coarse"), ConfigError);
  g.n = {5};
  g.times = {0.1, 0.2};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.times = {0.1, 0.2, 0.4};
  CHECK_THROWS_AS(g.validate(), ConfigError);  // non-uniform
  g.times = {0.1, 0.2, 0.3};
  CHECK_NOTHROW(g.validate());
  const GridSpec r = g.refined();
  CHECK(r.n[0] == 9);
  CHECK(r.times.size() == 5);
  CHECK(r.dt() == doctest::Approx(0.05));
}

TEST_CASE("reversed field generates the reversed path") {
  for (const auto& sch : {PathSchedule::ot(1e-5), PathSchedule::vp()}) {
    const MixtureOracle oracle =
        MixtureOracle::uniform({{1.0, 0.0}, {-1.0, 0.0}}, sch);
    const ResidualReport rep =
        reversed_continuity_residual(oracle, grid2d(129, 0.8, 2.5e-4, 2.0));
    CHECK(rep.max_abs < 1e-3);
  }

  // double reversal at dyadic times is the identity, bitwise
  const MixtureOracle oracle =
      MixtureOracle::uniform({{0.9, -0.1}, {-0.3, 0.6}}, PathSchedule::ot(1e-5));
  Pcg64 rng = Pcg64::substream(60, 1);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> x = {rng.next_normal(), rng.next_normal()};
    const double t = static_cast<double>(8 + rng.next_below(49)) / 64.0;
    std::vector<double> u(2), rev(2), mid(2);
    oracle.marginal_vf(t, x, u);
    reversed_marginal_vf(oracle, 1.0 - t, x, rev);
    CHECK(-rev[0] == u[0]);
    CHECK(-rev[1] == u[1]);
    // reversal at the midpoint is pure negation
    oracle.marginal_vf(0.5, x, u);
    reversed_marginal_vf(oracle, 0.5, x, mid);
    CHECK(mid[0] == -u[0]);
    CHECK(mid[1] == -u[1]);
  }
}

TEST_CASE("probability-flow route coincides with the conditional fields") {
  Pcg64 rng = Pcg64::substream(61, 1);
  for (const auto& sch : {PathSchedule::vp(), PathSchedule::ve()}) {
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> x = {2 * rng.next_normal(), 2 * rng.next_normal()};
      std::vector<double> x1 = {rng.next_normal(), rng.next_normal()};
      const double t = rng.next_uniform(0.0, sch.max_time());
      std::vector<double> w(2), closed(2);
      probability_flow_vf_conditional(sch, t, x, x1, w);
      conditional_vf_closed(sch, t, x, x1, closed);
      for (int j = 0; j < 2; ++j)
        CHECK(std::abs(w[j] - closed[j]) <=
              1e-8 * (std::max(std::abs(w[j]), std::abs(closed[j])) + 1e-8));
    }
  }

  // at the conditional mean the score term vanishes: w is the reversed drift
  const PathSchedule vp = PathSchedule::vp();
  const std::vector<double> x1 = {0.8, -0.4};
  const double t = 0.37;
  const MeanStd ms = mean_std(vp, t, x1);
  std::vector<double> w(2);
  probability_flow_vf_conditional(vp, t, ms.mu, x1, w);
  const double c = 0.5 * vp.vp_beta(1.0 - t);
  CHECK(w[0] == doctest::Approx(c * ms.mu[0]).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(c * ms.mu[1]).epsilon(1e-12));

  // marginal version with one point matches the conditional route
  const MixtureOracle one = MixtureOracle::uniform({x1}, vp);
  Pcg64 rng2 = Pcg64::substream(61, 2);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> x = {rng2.next_normal(), rng2.next_normal()};
    std::vector<double> wm(2), wc(2);
    one.probability_flow_vf(t, x, wm);
    probability_flow_vf_conditional(vp, t, x, x1, wc);
    CHECK(wm[0] == doctest::Approx(wc[0]).epsilon(1e-12));
    CHECK(wm[1] == doctest::Approx(wc[1]).epsilon(1e-12));
  }

  std::vector<double> dummy(2);
  CHECK_THROWS_AS(probability_flow_vf_conditional(PathSchedule::ot(1e-5), 0.5,
                                                  x1, x1, dummy),
                  DomainError);
}

TEST_CASE("residual csv format") {
  std::ostringstream os;
  ResidualReport rep;
  rep.h = 0.03125;
  rep.max_abs = 1.5e-4;
  rep.mean_abs = 2.0e-5;
  write_residual_csv(os, {{0.2, rep}});
  CHECK(os.str() ==
        "t,grid_h,max_residual,mean_residual\n0.2,0.03125,0.00015,2e-05\n");
}
