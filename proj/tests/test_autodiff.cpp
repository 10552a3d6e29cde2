// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "flowmatch/rng.hpp"
#include "flowmatch/tape.hpp"

using flowmatch::Gradients;
using flowmatch::Pcg64;
using flowmatch::ShapeError;
using flowmatch::Tape;
using flowmatch::Tensor;
using flowmatch::Var;

TEST_CASE("forward op values") {
  Tape tape;

  SUBCASE("matmul against the identity") {
    const Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    const Var eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    const Var c = tape.matmul(a, eye);
    CHECK(tape.value(c).span()[0] == 1);
    CHECK(tape.value(c).span()[1] == 2);
    CHECK(tape.value(c).span()[2] == 3);
    CHECK(tape.value(c).span()[3] == 4);
  }

  SUBCASE("silu at zero is zero") {
    const Var x = tape.constant(Tensor::row({0.0}));
    CHECK(tape.value(tape.silu(x))[0] == 0.0);
  }

  SUBCASE("squared l2 of (3,4) is 25") {
    const Var x = tape.constant(Tensor::row({3.0, 4.0}));
    CHECK(tape.value(tape.squared_l2(x)).value() == 25.0);
  }

  SUBCASE("broadcast add of a bias row") {
    const Var m = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    const Var b = tape.constant(Tensor::row({10, 20}));
    const Tensor& v = tape.value(tape.add(m, b));
    CHECK(v.at(0, 0) == 11);
    CHECK(v.at(0, 1) == 22);
    CHECK(v.at(1, 0) == 13);
    CHECK(v.at(1, 1) == 24);
  }
}

TEST_CASE("shape errors name both shapes") {
  Tape tape;
  const Var a = tape.constant(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)));
  const Var b = tape.constant(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b),
                       doctest::Contains("[2,3]"), ShapeError);
  const Var c = tape.constant(Tensor::row({1.0}));
  CHECK_THROWS_AS(tape.add(a, c), ShapeError);
  CHECK_THROWS_AS(tape.mul(a, c), ShapeError);
}

TEST_CASE("backward on simple closed forms") {
  SUBCASE("d/dx sum(x*x) = 2x") {
    Tape tape;
    const Var x = tape.leaf(Tensor::row({1, 2, 3}), true);
    const Var root = tape.sum(tape.mul(x, x));
    const Gradients g = tape.backward(root);
    const Tensor& gx = g.get(x);
    CHECK(gx[0] == 2.0);
    CHECK(gx[1] == 4.0);
    CHECK(gx[2] == 6.0);
  }

  SUBCASE("mse(Wx, y) at W=0, x=1, y=1 has dW = -2") {
    Tape tape;
    const Var w = tape.leaf(Tensor::matrix(1, 1, {0.0}), true);
    const Var x = tape.constant(Tensor::matrix(1, 1, {1.0}));
    const Var y = tape.constant(Tensor::matrix(1, 1, {1.0}));
    const Var loss = tape.mean(
        tape.mul(tape.sub(tape.matmul(x, w), y), tape.sub(tape.matmul(x, w), y)));
    const Gradients g = tape.backward(loss);
    CHECK(g.get(w)[0] == doctest::Approx(-2.0).epsilon(1e-14));
  }

  SUBCASE("non-scalar root is rejected") {
    Tape tape;
    const Var x = tape.leaf(Tensor::row({1, 2}), true);
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
  }
}

namespace {

// tiny random MLP built directly on the tape; returns the scalar loss
double mlp_loss(const std::vector<Tensor>& params, const Tensor& input,
                Gradients* grads_out, std::vector<Var>* param_vars_out) {
  Tape tape;
  std::vector<Var> pv;
  for (const auto& p : params) pv.push_back(tape.leaf(p, true));
  Var h = tape.constant(input);
  const std::size_t layers = params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = tape.add(tape.matmul(h, pv[2 * l]), pv[2 * l + 1]);
    if (l + 1 < layers) h = (l % 2 == 0) ? tape.tanh(h) : tape.silu(h);
  }
  const Var loss = tape.smul(tape.squared_l2(h), 0.5);
  if (grads_out) *grads_out = tape.backward(loss);
  if (param_vars_out) *param_vars_out = pv;
  return tape.value(loss).value();
}

}  // namespace

TEST_CASE("gradients match central finite differences on random networks") {
  Pcg64 rng = Pcg64::substream(31, 2);
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    const int batch = 3;
    const int in = 2 + static_cast<int>(rng.next_below(3));
    const int hid = 4 + static_cast<int>(rng.next_below(13));  // <= 16 units
    const int out = 1 + static_cast<int>(rng.next_below(3));
    const std::vector<int> widths = {in, hid, hid, out};  // <= 3 layers

    std::vector<Tensor> params;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      Tensor w = Tensor::zeros({widths[l], widths[l + 1]});
      Tensor b = Tensor::zeros({widths[l + 1]});
      for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = 0.7 * rng.next_normal();
      for (std::int64_t i = 0; i < b.numel(); ++i) b[i] = 0.3 * rng.next_normal();
      params.push_back(std::move(w));
      params.push_back(std::move(b));
    }
    Tensor input = Tensor::zeros({batch, in});
    for (std::int64_t i = 0; i < input.numel(); ++i) input[i] = rng.next_normal();

    Gradients grads(0);
    std::vector<Var> pv;
    mlp_loss(params, input, &grads, &pv);

    for (std::size_t p = 0; p < params.size(); ++p) {
      const Tensor& g = grads.get(pv[p]);
      for (std::int64_t i = 0; i < params[p].numel(); ++i) {
        std::vector<Tensor> up = params, dn = params;
        up[p][i] += h;
        dn[p][i] -= h;
        const double fd =
            (mlp_loss(up, input, nullptr, nullptr) -
             mlp_loss(dn, input, nullptr, nullptr)) /
            (2 * h);
        const double rel =
            std::abs(g[i] - fd) / (std::max(std::abs(g[i]), std::abs(fd)) + 1e-8);
        CHECK(rel <= 1e-5);
      }
    }
  }
}

TEST_CASE("identical seeds give bitwise-identical values and gradients") {
  auto run = [] {
    Pcg64 rng = Pcg64::substream(5, 3);
    Tensor w = Tensor::zeros({4, 4});
    Tensor x = Tensor::zeros({2, 4});
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = rng.next_normal();
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.next_normal();
    Tape tape;
    const Var wv = tape.leaf(w, true);
    const Var xv = tape.constant(x);
    const Var loss = tape.squared_l2(tape.silu(tape.matmul(xv, wv)));
    const Gradients g = tape.backward(loss);
    return std::pair<double, Tensor>(tape.value(loss).value(), g.get(wv));
  };
  const auto [l1, g1] = run();
  const auto [l2, g2] = run();
  CHECK(l1 == l2);
  for (std::int64_t i = 0; i < g1.numel(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("backward is linear in the root") {
  Pcg64 rng = Pcg64::substream(8, 4);
  Tensor x0 = Tensor::row({rng.next_normal(), rng.next_normal(), rng.next_normal()});
  const double a = 1.3, b = -0.7;

  Tape tape;
  const Var x = tape.leaf(x0, true);
  const Var f = tape.squared_l2(tape.tanh(x));
  const Var g = tape.sum(tape.mul(x, x));
  const Var combo = tape.add(tape.smul(f, a), tape.smul(g, b));

  const Gradients gc = tape.backward(combo);
  const Gradients gf = tape.backward(f);
  const Gradients gg = tape.backward(g);
  for (std::int64_t i = 0; i < x0.numel(); ++i) {
    const double lin = a * gf.get(x)[i] + b * gg.get(x)[i];
    CHECK(std::abs(gc.get(x)[i] - lin) <= 1e-12);
  }
}

TEST_CASE("gradient shapes equal value shapes") {
  Tape tape;
  const Var w = tape.leaf(Tensor::matrix(3, 2, std::vector<double>(6, 0.5)), true);
  const Var x = tape.constant(Tensor::matrix(4, 3, std::vector<double>(12, 1.0)));
  const Var b = tape.leaf(Tensor::row({0.1, 0.2}), true);
  const Var loss = tape.mean(tape.add(tape.matmul(x, w), b));
  const Gradients g = tape.backward(loss);
  CHECK(g.get(w).shape() == tape.value(w).shape());
  CHECK(g.get(b).shape() == tape.value(b).shape());
}
