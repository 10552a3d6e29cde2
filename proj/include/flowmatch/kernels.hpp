// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

// Dense double-precision kernels behind the tensor/autodiff layer.
//
// Every kernel has a scalar reference implementation and, where the hardware
// supports it, a SIMD variant (AVX2+FMA on x86-64, NEON on aarch64) selected
// once at process start. Elementwise kernels produce bitwise-identical
// results across backends (one FP op per element); reductions and GEMM
// accumulate in a different order under SIMD and are equivalence-tested
// against the scalar reference at tight relative tolerance instead.
// Transcendentals (tanh, exp) stay scalar on all backends.

namespace flowmatch::kernels {

enum class Backend { scalar, avx2, neon };

const char* backend_name(Backend b);
bool backend_available(Backend b);

// Active backend: best available unless overridden by set_backend() or the
// FLOWMATCH_BACKEND environment variable (values: scalar, avx2, neon).
Backend active_backend();
void set_backend(Backend b);  // throws ConfigError if unavailable

// dst[i] = a[i] + b[i]
void add(const double* a, const double* b, double* dst, std::size_t n);
// dst[i] = a[i] - b[i]
void sub(const double* a, const double* b, double* dst, std::size_t n);
// dst[i] = a[i] * b[i]
void mul(const double* a, const double* b, double* dst, std::size_t n);
// dst[i] = s * a[i]
void scale(const double* a, double s, double* dst, std::size_t n);
// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);

double sum(const double* a, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sum_sq(const double* a, std::size_t n);

// Row-major, packed. When accumulate is false C is overwritten.
// C[MxN] (+)= A[MxK] * B[KxN]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate);
// C[MxN] (+)= A[MxK] * B[NxK]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate);
// C[MxN] (+)= A[KxM]^T * B[KxN]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate);

// Scalar-only element maps shared by all backends.
void tanh_map(const double* x, double* dst, std::size_t n);
void sigmoid_map(const double* x, double* dst, std::size_t n);
void silu_map(const double* x, double* dst, std::size_t n);

namespace scalar {
void add(const double* a, const double* b, double* dst, std::size_t n);
void sub(const double* a, const double* b, double* dst, std::size_t n);
void mul(const double* a, const double* b, double* dst, std::size_t n);
void scale(const double* a, double s, double* dst, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
double sum(const double* a, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sum_sq(const double* a, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate);
}  // namespace scalar

}  // namespace flowmatch::kernels
