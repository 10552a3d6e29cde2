// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "flowmatch/dataset.hpp"

using namespace flowmatch;

TEST_CASE("checkerboard samples live on even-parity cells") {
  const ToyDataset data(ToyKind::checkerboard);
  Pcg64 rng = Pcg64::substream(101, Substream::data);
  const Tensor pts = data.sample(rng, 20000);
  for (std::int64_t r = 0; r < pts.rows(); ++r) {
    const double x = pts.at(r, 0);
    const double y = pts.at(r, 1);
    CHECK(x >= -2.0);
    CHECK(x < 2.0);
    const long ix = static_cast<long>(std::floor(x + 2.0));
    const long iy = static_cast<long>(std::floor(y + 2.0));
    CHECK((ix + iy) % 2 == 0);
    CHECK(data.density(std::vector<double>{x, y}) == doctest::Approx(0.125));
  }
  // off-support: odd cell and outside the square
  CHECK(data.density(std::vector<double>{-1.5, -0.5}) == 0.0);
  CHECK(data.density(std::vector<double>{5.0, 0.0}) == 0.0);
  CHECK(data.entropy() == doctest::Approx(std::log(8.0)));
}

TEST_CASE("checkerboard cells are evenly occupied") {
  const ToyDataset data(ToyKind::checkerboard);
  Pcg64 rng = Pcg64::substream(102, Substream::data);
  const int n = 80000;
  const Tensor pts = data.sample(rng, n);
  std::vector<int> counts(16, 0);
  for (std::int64_t r = 0; r < pts.rows(); ++r) {
    const int ix = static_cast<int>(std::floor(pts.at(r, 0) + 2.0));
    const int iy = static_cast<int>(std::floor(pts.at(r, 1) + 2.0));
    ++counts[ix * 4 + iy];
  }
  for (int c = 0; c < 16; ++c) {
    const int ix = c / 4, iy = c % 4;
    if ((ix + iy) % 2 == 0) {
      // 5 sigma binomial band around n/8
      const double expect = n / 8.0;
      const double sd = std::sqrt(n * (1.0 / 8) * (7.0 / 8));
      CHECK(std::abs(counts[c] - expect) < 5 * sd);
    } else {
      CHECK(counts[c] == 0);
    }
  }
}

TEST_CASE("eight gaussians cluster at the analytic centers") {
  const ToyDataset data(ToyKind::eight_gaussians);
  Pcg64 rng = Pcg64::substream(103, Substream::data);
  const int n = 16000;
  const Tensor pts = data.sample(rng, n);

  std::vector<double> cx(8, 0.0), cy(8, 0.0);
  std::vector<int> cnt(8, 0);
  for (std::int64_t r = 0; r < pts.rows(); ++r) {
    // assign to the nearest center
    int best = 0;
    double bd = 1e300;
    for (int kc = 0; kc < 8; ++kc) {
      const double ang = 2.0 * M_PI * kc / 8.0;
      const double dx = pts.at(r, 0) - 2.0 * std::cos(ang);
      const double dy = pts.at(r, 1) - 2.0 * std::sin(ang);
      const double d2 = dx * dx + dy * dy;
      if (d2 < bd) {
        bd = d2;
        best = kc;
      }
    }
    cx[best] += pts.at(r, 0);
    cy[best] += pts.at(r, 1);
    ++cnt[best];
  }
  for (int kc = 0; kc < 8; ++kc) {
    REQUIRE(cnt[kc] > n / 16);
    const double ang = 2.0 * M_PI * kc / 8.0;
    const double band = 3.0 * 0.1 / std::sqrt(static_cast<double>(cnt[kc]));
    CHECK(std::abs(cx[kc] / cnt[kc] - 2.0 * std::cos(ang)) < band + 1e-3);
    CHECK(std::abs(cy[kc] / cnt[kc] - 2.0 * std::sin(ang)) < band + 1e-3);
  }

  // the mixture density is exact and symmetric under 45-degree rotation
  const double p0 = data.density(std::vector<double>{2.0, 0.0});
  const double p45 = data.density(std::vector<double>{2.0 / std::sqrt(2.0),
                                                      2.0 / std::sqrt(2.0)});
  CHECK(p0 == doctest::Approx(p45).epsilon(1e-12));
}

TEST_CASE("two moons stay inside the declared box") {
  const ToyDataset data(ToyKind::two_moons);
  Pcg64 rng = Pcg64::substream(104, Substream::data);
  const Tensor pts = data.sample(rng, 50000);
  const auto b = data.support_bounds();
  for (std::int64_t r = 0; r < pts.rows(); ++r) {
    CHECK(pts.at(r, 0) >= b[0]);
    CHECK(pts.at(r, 0) <= b[1]);
    CHECK(pts.at(r, 1) >= b[2]);
    CHECK(pts.at(r, 1) <= b[3]);
  }
  CHECK_FALSE(data.has_exact_density());
  CHECK_THROWS_AS(data.log_density(std::vector<double>{0.0, 0.0}), DomainError);
}

TEST_CASE("samplers are bitwise reproducible per seed") {
  for (ToyKind kind : {ToyKind::checkerboard, ToyKind::eight_gaussians,
                       ToyKind::two_moons}) {
    const ToyDataset data(kind);
    Pcg64 ra = Pcg64::substream(7, Substream::data);
    Pcg64 rb = Pcg64::substream(7, Substream::data);
    const Tensor a = data.sample(ra, 257);
    const Tensor b = data.sample(rb, 257);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("quantized synthetic dataset") {
  Pcg64 rng = Pcg64::substream(105, Substream::data);
  const auto pts = quantized_synthetic(4, 500, rng);
  CHECK(pts.size() == 500);
  for (const auto& row : pts) {
    CHECK(row.size() == 4);
    for (int v : row) {
      CHECK(v >= 0);
      CHECK(v <= 255);
    }
  }

  // collapsed generator: every pixel is exactly 128
  Pcg64 rng0 = Pcg64::substream(106, Substream::data);
  const auto constant = quantized_synthetic(3, 50, rng0, 0.0, 0.0);
  for (const auto& row : constant)
    for (int v : row) CHECK(v == 128);

  CHECK_THROWS_AS(quantized_synthetic(9, 10, rng), ConfigError);

  // determinism
  Pcg64 ra = Pcg64::substream(9, Substream::data);
  Pcg64 rb = Pcg64::substream(9, Substream::data);
  CHECK(quantized_synthetic(4, 64, ra) == quantized_synthetic(4, 64, rb));
}

TEST_CASE("quantized synthetic mixture density is symmetric and normalized-ish") {
  // symmetry of the two-component mixture
  const std::vector<double> y = {0.2, -0.1, 0.3, 0.0};
  std::vector<double> ym(4);
  for (int i = 0; i < 4; ++i) ym[i] = -y[i];
  CHECK(quantized_synthetic_log_density(y) ==
        doctest::Approx(quantized_synthetic_log_density(ym)).epsilon(1e-12));

  // 1d check: integrates to ~1 on a fine grid
  double acc = 0.0;
  const int n = 4001;
  for (int i = 0; i < n; ++i) {
    const double x = -2.0 + 4.0 * i / (n - 1);
    acc += std::exp(quantized_synthetic_log_density(std::vector<double>{x})) * 4.0 /
           (n - 1);
  }
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("dataset csv round trip") {
  const ToyDataset data(ToyKind::two_moons);
  Pcg64 rng = Pcg64::substream(107, Substream::data);
  const Tensor pts = data.sample(rng, 31);
  std::ostringstream os;
  dump_csv(os, ToyKind::two_moons, 107, pts);
  std::istringstream is(os.str());
  const Tensor back = load_csv(is);
  REQUIRE(back.rows() == 31);
  for (std::int64_t i = 0; i < pts.numel(); ++i)
    CHECK(back[i] == doctest::Approx(pts[i]).epsilon(1e-15));
  CHECK(os.str().substr(0, 1) == "#");
}
