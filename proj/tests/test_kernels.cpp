// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "flowmatch/kernels.hpp"
#include "flowmatch/rng.hpp"

namespace k = flowmatch::kernels;
using flowmatch::Pcg64;

namespace {

std::vector<double> random_vec(Pcg64& rng, std::size_t n, double scale = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.next_normal();
  return v;
}

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * (std::max(std::abs(a), std::abs(b)) + 1.0);
}

}  // namespace

TEST_CASE("scalar gemm matches hand-computed products") {
  // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
  const std::vector<double> a = {1, 2, 3, 4};
  const std::vector<double> b = {5, 6, 7, 8};
  std::vector<double> c(4, 0.0);
  k::scalar::gemm_nn(2, 2, 2, a.data(), b.data(), c.data(), false);
  CHECK(c == std::vector<double>{19, 22, 43, 50});

  // accumulate
  k::scalar::gemm_nn(2, 2, 2, a.data(), b.data(), c.data(), true);
  CHECK(c == std::vector<double>{38, 44, 86, 100});

  // nt: C = A * B^T with B stored [N x K]
  std::vector<double> cnt(4, 0.0);
  k::scalar::gemm_nt(2, 2, 2, a.data(), b.data(), cnt.data(), false);
  CHECK(cnt == std::vector<double>{17, 23, 39, 53});

  // tn: C = A^T * B with A stored [K x M]
  std::vector<double> ctn(4, 0.0);
  k::scalar::gemm_tn(2, 2, 2, a.data(), b.data(), ctn.data(), false);
  CHECK(ctn == std::vector<double>{26, 30, 38, 44});
}

TEST_CASE("simd backend matches scalar reference") {
  if (!k::backend_available(k::Backend::avx2) &&
      !k::backend_available(k::Backend::neon)) {
    MESSAGE("no SIMD backend on this host, equivalence suite skipped");
    return;
  }
  const k::Backend simd = k::backend_available(k::Backend::avx2)
                              ? k::Backend::avx2
                              : k::Backend::neon;
  const k::Backend saved = k::active_backend();
  k::set_backend(simd);

  Pcg64 rng = Pcg64::substream(99, 1);
  // deliberately awkward sizes to cover vector tails
  for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{4},
                        std::size_t{7}, std::size_t{64}, std::size_t{129},
                        std::size_t{1000}}) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);
    std::vector<double> ref(n), out(n);

    // elementwise ops are one FP op per lane: bitwise equal across backends
    k::scalar::add(a.data(), b.data(), ref.data(), n);
    k::add(a.data(), b.data(), out.data(), n);
    CHECK(ref == out);
    k::scalar::sub(a.data(), b.data(), ref.data(), n);
    k::sub(a.data(), b.data(), out.data(), n);
    CHECK(ref == out);
    k::scalar::mul(a.data(), b.data(), ref.data(), n);
    k::mul(a.data(), b.data(), out.data(), n);
    CHECK(ref == out);
    k::scalar::scale(a.data(), 1.7, ref.data(), n);
    k::scale(a.data(), 1.7, out.data(), n);
    CHECK(ref == out);

    // reductions and fma-based kernels reassociate: tight tolerance instead
    CHECK(close_rel(k::scalar::sum(a.data(), n), k::sum(a.data(), n), 1e-13));
    CHECK(close_rel(k::scalar::dot(a.data(), b.data(), n),
                    k::dot(a.data(), b.data(), n), 1e-13));
    CHECK(close_rel(k::scalar::sum_sq(a.data(), n), k::sum_sq(a.data(), n), 1e-13));

    std::vector<double> ya = b, yb = b;
    k::scalar::axpy(0.37, a.data(), ya.data(), n);
    k::axpy(0.37, a.data(), yb.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(close_rel(ya[i], yb[i], 1e-13));
  }

  const std::vector<std::tuple<int, int, int>> gemm_sizes = {
      std::make_tuple(1, 1, 1), std::make_tuple(3, 5, 7),
      std::make_tuple(8, 8, 8), std::make_tuple(17, 33, 9),
      std::make_tuple(64, 66, 65)};
  for (auto [m, nn, kk] : gemm_sizes) {
    const auto a = random_vec(rng, m * kk);
    const auto b = random_vec(rng, kk * nn);
    const auto bt = random_vec(rng, nn * kk);
    const auto at = random_vec(rng, kk * m);
    std::vector<double> ref(m * nn), out(m * nn);

    k::scalar::gemm_nn(m, nn, kk, a.data(), b.data(), ref.data(), false);
    k::gemm_nn(m, nn, kk, a.data(), b.data(), out.data(), false);
    for (int i = 0; i < m * nn; ++i) CHECK(close_rel(ref[i], out[i], 1e-13));

    // accumulate mode on top of the previous product
    k::scalar::gemm_nn(m, nn, kk, a.data(), b.data(), ref.data(), true);
    k::gemm_nn(m, nn, kk, a.data(), b.data(), out.data(), true);
    for (int i = 0; i < m * nn; ++i) CHECK(close_rel(ref[i], out[i], 1e-13));

    k::scalar::gemm_nt(m, nn, kk, a.data(), bt.data(), ref.data(), false);
    k::gemm_nt(m, nn, kk, a.data(), bt.data(), out.data(), false);
    for (int i = 0; i < m * nn; ++i) CHECK(close_rel(ref[i], out[i], 1e-13));

    k::scalar::gemm_nt(m, nn, kk, a.data(), bt.data(), ref.data(), true);
    k::gemm_nt(m, nn, kk, a.data(), bt.data(), out.data(), true);
    for (int i = 0; i < m * nn; ++i) CHECK(close_rel(ref[i], out[i], 1e-13));

    k::scalar::gemm_tn(m, nn, kk, at.data(), b.data(), ref.data(), false);
    k::gemm_tn(m, nn, kk, at.data(), b.data(), out.data(), false);
    for (int i = 0; i < m * nn; ++i) CHECK(close_rel(ref[i], out[i], 1e-13));

    k::scalar::gemm_tn(m, nn, kk, at.data(), b.data(), ref.data(), true);
    k::gemm_tn(m, nn, kk, at.data(), b.data(), out.data(), true);
    for (int i = 0; i < m * nn; ++i) CHECK(close_rel(ref[i], out[i], 1e-13));
  }

  k::set_backend(saved);
}

TEST_CASE("backend selection is sticky and validated") {
  const k::Backend saved = k::active_backend();
  k::set_backend(k::Backend::scalar);
  CHECK(k::active_backend() == k::Backend::scalar);
  CHECK(k::backend_available(k::Backend::scalar));
#if defined(__x86_64__)
  CHECK_THROWS_AS(k::set_backend(k::Backend::neon), flowmatch::ConfigError);
#else
  CHECK_THROWS_AS(k::set_backend(k::Backend::avx2), flowmatch::ConfigError);
#endif
  k::set_backend(saved);
}
