// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "flowmatch/kernels.hpp"
#include "flowmatch/objectives.hpp"

using namespace flowmatch;

namespace {

VectorFieldModel fresh_model(Parameterization p, int dim = 2,
                             std::uint64_t seed = 42) {
  ModelConfig cfg;
  cfg.dim = dim;
  cfg.hidden = {16, 16};
  cfg.parameterization = p;
  Pcg64 rng = Pcg64::substream(seed, Substream::init);
  return VectorFieldModel(cfg, rng);  // zero final layer: the zero map
}

struct Draws {
  Tensor x1, x0;
  std::vector<double> t;
};

Draws draw_batch(int batch, ConstSpan x1_point, const PathSchedule& sch,
                 std::uint64_t seed) {
  Draws d;
  const int dim = static_cast<int>(x1_point.size());
  d.x1 = Tensor::zeros({batch, dim});
  d.x0 = Tensor::zeros({batch, dim});
  d.t.resize(batch);
  Pcg64 rng = Pcg64::substream(seed, Substream::batch);
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < dim; ++j) {
      d.x1.at(b, j) = x1_point[j];
      d.x0.at(b, j) = rng.next_normal();
    }
    d.t[b] = rng.next_double() * sch.max_time();
  }
  return d;
}

}  // namespace

TEST_CASE("cfm loss of the zero model on the origin dataset is E||x0||^2 = d") {
  const PathSchedule sch = PathSchedule::ot(1e-9);
  const VectorFieldModel model = fresh_model(Parameterization::vector_field);
  const std::vector<double> origin = {0.0, 0.0};
  const Draws d = draw_batch(20000, origin, sch, 7);
  Tape tape;
  const LossOnTape loss = cfm_loss(tape, model, sch, d.x1, d.x0, d.t);
  // ||x0||^2 is chi^2(2): mean 2, var 8; 3 sigma monte-carlo band
  CHECK(tape.value(loss.loss).value() ==
        doctest::Approx(2.0).epsilon(3.0 * std::sqrt(8.0 / 20000.0) / 2.0));
  CHECK(loss.per_sample.size() == 20000);
  const double manual =
      std::accumulate(loss.per_sample.begin(), loss.per_sample.end(), 0.0) / 20000.0;
  CHECK(manual == doctest::Approx(tape.value(loss.loss).value()).epsilon(1e-12));
}

TEST_CASE("loss vanishes exactly when the model hits the target") {
  // zero-initialized model is the zero map; x0 = 0 and x1 = 0 make every
  // target zero as well
  const PathSchedule sch = PathSchedule::ot(1e-5);
  const int batch = 8;
  Tensor x1 = Tensor::zeros({batch, 2});
  Tensor x0 = Tensor::zeros({batch, 2});
  std::vector<double> t(batch);
  for (int b = 0; b < batch; ++b) t[b] = 0.1 + 0.1 * b;

  {
    Tape tape;
    const VectorFieldModel m = fresh_model(Parameterization::vector_field);
    CHECK(tape.value(cfm_loss(tape, m, sch, x1, x0, t).loss).value() == 0.0);
  }
  {
    Tape tape;
    const VectorFieldModel m = fresh_model(Parameterization::score);
    CHECK(tape.value(sm_loss(tape, m, sch, x1, x0, t).loss).value() == 0.0);
  }
  {
    Tape tape;
    const VectorFieldModel m = fresh_model(Parameterization::noise);
    CHECK(tape.value(ddpm_loss(tape, m, sch, x1, x0, t).loss).value() == 0.0);
  }
}

TEST_CASE("reparameterized and sampled-target routes agree on the same draws") {
  const PathSchedule sch = PathSchedule::ot(0.05);
  ModelConfig mc;
  mc.dim = 2;
  mc.hidden = {16, 16};
  Pcg64 init = Pcg64::substream(3, Substream::init);
  VectorFieldModel model(mc, init);
  for (Tensor* p : model.parameters())
    for (std::int64_t i = 0; i < p->numel(); ++i)
      (*p)[i] = 0.3 * init.next_normal();

  const std::vector<double> x1pt = {0.7, -0.2};
  const Draws d = draw_batch(512, x1pt, sch, 11);

  Tape tape;
  const LossOnTape reparam = cfm_loss(tape, model, sch, d.x1, d.x0, d.t);

  // explicit route: x = psi_t(x0), target = u_t(x|x1)
  double acc = 0.0;
  VectorFieldModel::Workspace ws;
  for (int b = 0; b < 512; ++b) {
    std::vector<double> xt(2), u(2), v(2);
    ConstSpan x0b(d.x0.data() + 2 * b, 2);
    ConstSpan x1b(d.x1.data() + 2 * b, 2);
    conditional_flow(sch, d.t[b], x0b, x1b, xt);
    conditional_vf(sch, d.t[b], xt, x1b, u);
    model.forward_inference(d.t[b], xt, v, ws);
    acc += (v[0] - u[0]) * (v[0] - u[0]) + (v[1] - u[1]) * (v[1] - u[1]);
  }
  acc /= 512.0;
  CHECK(std::abs(acc - tape.value(reparam.loss).value()) <= 1e-12 * (acc + 1.0));
}

TEST_CASE("batch loss is permutation invariant") {
  const PathSchedule sch = PathSchedule::vp();
  const VectorFieldModel model = fresh_model(Parameterization::vector_field);
  Draws d = draw_batch(64, std::vector<double>{0.5, 0.5}, sch, 13);
  // vary x1 rows a bit
  for (int b = 0; b < 64; ++b) d.x1.at(b, 0) += 0.01 * b;

  Tape t1;
  const double l1 = t1.value(cfm_loss(t1, model, sch, d.x1, d.x0, d.t).loss).value();

  // reverse the batch
  Tensor x1r = Tensor::zeros({64, 2}), x0r = Tensor::zeros({64, 2});
  std::vector<double> tr(64);
  for (int b = 0; b < 64; ++b) {
    for (int j = 0; j < 2; ++j) {
      x1r.at(b, j) = d.x1.at(63 - b, j);
      x0r.at(b, j) = d.x0.at(63 - b, j);
    }
    tr[b] = d.t[63 - b];
  }
  Tape t2;
  const double l2 = t2.value(cfm_loss(t2, model, sch, x1r, x0r, tr).loss).value();
  CHECK(std::abs(l1 - l2) <= 1e-12 * (std::abs(l1) + 1.0));
}

TEST_CASE("score-matching losses") {
  const PathSchedule vp = PathSchedule::vp();
  const VectorFieldModel score_model = fresh_model(Parameterization::score);

  SUBCASE("zero model on a single point has mean loss d under the sm weighting") {
    const Draws d = draw_batch(20000, std::vector<double>{0.4, -0.6}, vp, 17);
    Tape tape;
    const double loss =
        tape.value(sm_loss(tape, score_model, vp, d.x1, d.x0, d.t).loss).value();
    CHECK(loss == doctest::Approx(2.0).epsilon(0.05));
  }

  SUBCASE("scoreflow weighting at t=0 is beta_max") {
    // at fixed t the scoreflow/sm ratio equals beta(1-t)/sigma_t^2
    const int batch = 4096;
    Draws d = draw_batch(batch, std::vector<double>{0.4, -0.6}, vp, 19);
    std::fill(d.t.begin(), d.t.end(), 0.0);
    Tape ta, tb;
    const double lsm =
        ta.value(sm_loss(ta, score_model, vp, d.x1, d.x0, d.t).loss).value();
    const double lsf =
        tb.value(scoreflow_loss(tb, score_model, vp, d.x1, d.x0, d.t).loss).value();
    const MeanStd ms = mean_std(vp, 0.0, std::vector<double>{0.4, -0.6});
    CHECK(lsf / lsm ==
          doctest::Approx(20.0 / (ms.sigma * ms.sigma)).epsilon(1e-10));
  }

  SUBCASE("wrong parameterization is rejected") {
    const VectorFieldModel vf_model = fresh_model(Parameterization::vector_field);
    const Draws d = draw_batch(4, std::vector<double>{0.0, 0.0}, vp, 23);
    Tape tape;
    CHECK_THROWS_AS(sm_loss(tape, vf_model, vp, d.x1, d.x0, d.t), ConfigError);
    CHECK_THROWS_AS(ddpm_loss(tape, vf_model, vp, d.x1, d.x0, d.t), ConfigError);
    const VectorFieldModel noise_model = fresh_model(Parameterization::noise);
    CHECK_THROWS_AS(cfm_loss(tape, noise_model, vp, d.x1, d.x0, d.t), ConfigError);
  }
}

TEST_CASE("ddpm loss of the zero model is the noise second moment") {
  const PathSchedule vp = PathSchedule::vp();
  const VectorFieldModel noise_model = fresh_model(Parameterization::noise);
  const Draws d = draw_batch(100000, std::vector<double>{0.3, 0.9}, vp, 29);
  Tape tape;
  const double loss =
      tape.value(ddpm_loss(tape, noise_model, vp, d.x1, d.x0, d.t).loss).value();
  // 3 sigma band around E||x0||^2 = 2, var 8 per sample
  CHECK(std::abs(loss - 2.0) <= 3.0 * std::sqrt(8.0 / 100000.0));
}

TEST_CASE("exact-fm quadrature") {
  SUBCASE("degenerate no-op path gives exactly zero loss for the zero model") {
    // sigma_min = 1 pins sigma_t = 1 and mu_t = 0: the marginal field is zero,
    // and so is the freshly initialized model
    const MixtureOracle oracle =
        MixtureOracle::uniform({{0.0, 0.0}}, PathSchedule::ot(1.0));
    const VectorFieldModel model = fresh_model(Parameterization::vector_field);
    QuadratureGrid grid;
    grid.nt = 5;
    grid.nx = {21, 21};
    const QuadratureLoss fm = fm_loss_exact(model, oracle, grid);
    CHECK(fm.value <= 1e-20);
  }

  SUBCASE("single-point dataset: fm equals the cfm quadrature") {
    for (const auto& sch : {PathSchedule::ot(1e-2), PathSchedule::vp()}) {
      const MixtureOracle oracle = MixtureOracle::uniform({{0.5, -0.3}}, sch);
      ModelConfig mc;
      mc.dim = 2;
      mc.hidden = {8, 8};
      Pcg64 init = Pcg64::substream(31, Substream::init);
      VectorFieldModel model(mc, init);
      for (Tensor* p : model.parameters())
        for (std::int64_t i = 0; i < p->numel(); ++i)
          (*p)[i] = 0.4 * init.next_normal();
      QuadratureGrid grid;
      grid.nt = 7;
      grid.nx = {31, 31};
      const QuadratureLoss fm = fm_loss_exact(model, oracle, grid);
      const QuadratureLoss cfm = cfm_loss_quadrature(model, oracle, grid);
      CHECK(fm.value == doctest::Approx(cfm.value).epsilon(1e-12));
      for (std::size_t p = 0; p < fm.grads.size(); ++p)
        for (std::int64_t i = 0; i < fm.grads[p].numel(); ++i)
          CHECK(std::abs(fm.grads[p][i] - cfm.grads[p][i]) <=
                1e-10 * (std::abs(fm.grads[p][i]) + 1e-6));
    }
  }

  SUBCASE("under-resolved quadrature is flagged") {
    // a tiny grid cannot carry the probability mass
    const MixtureOracle oracle =
        MixtureOracle::uniform({{0.0, 0.0}}, PathSchedule::ot(1e-2));
    const VectorFieldModel model = fresh_model(Parameterization::vector_field);
    QuadratureGrid grid;
    grid.nt = 3;
    grid.lo = {-0.5, -0.5};
    grid.hi = {0.5, 0.5};
    grid.nx = {5, 5};
    CHECK(fm_loss_exact(model, oracle, grid).under_resolved);
  }
}

TEST_CASE("parameterization conversions") {
  const PathSchedule vp = PathSchedule::vp();
  const std::vector<double> x = {0.8, -1.1};
  const std::vector<double> x1 = {0.2, 0.5};
  const double t = 0.43;

  SUBCASE("zero noise output maps to the pure drift field") {
    std::vector<double> eps = {0.0, 0.0}, out(2);
    to_vector_field(Parameterization::noise, vp, t, x, eps, out);
    const double c = 0.5 * vp.vp_beta(1.0 - t);
    CHECK(out[0] == doctest::Approx(c * x[0]).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(c * x[1]).epsilon(1e-14));
  }

  SUBCASE("exact conditional score converts to the conditional field") {
    std::vector<double> score(2), out(2), expect(2);
    conditional_score(vp, t, x, x1, score);
    to_vector_field(Parameterization::score, vp, t, x, score, out);
    conditional_vf_closed(vp, t, x, x1, expect);
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(out[j] - expect[j]) <= 1e-8 * (std::abs(expect[j]) + 1e-8));
  }

  SUBCASE("exact noise converts through score to the conditional field") {
    // the ideal noise model predicts (x - mu)/sigma, i.e. -sigma * score
    const MeanStd ms = mean_std(vp, t, x1);
    std::vector<double> eps(2), out(2), expect(2);
    for (int j = 0; j < 2; ++j) eps[j] = (x[j] - ms.mu[j]) / ms.sigma;
    to_vector_field(Parameterization::noise, vp, t, x, eps, out);
    conditional_vf_closed(vp, t, x, x1, expect);
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(out[j] - expect[j]) <= 1e-12 * (std::abs(expect[j]) + 1e-12));
  }

  SUBCASE("score conversion rejects non-vp schedules") {
    std::vector<double> s = {0.0, 0.0}, out(2);
    CHECK_THROWS_AS(
        to_vector_field(Parameterization::score, PathSchedule::ot(1e-5), t, x, s, out),
        ConfigError);
  }

  SUBCASE("vector-field parameterization passes through") {
    std::vector<double> v = {1.5, -2.5}, out(2);
    to_vector_field(Parameterization::vector_field, vp, t, x, v, out);
    CHECK(out[0] == 1.5);
    CHECK(out[1] == -2.5);
  }
}
