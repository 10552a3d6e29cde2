// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <string>

#include "flowmatch/common.hpp"
#include "flowmatch/kernels.hpp"

namespace flowmatch::kernels {

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void add(const double*, const double*, double*, std::size_t);
void sub(const double*, const double*, double*, std::size_t);
void mul(const double*, const double*, double*, std::size_t);
void scale(const double*, double, double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
double sum(const double*, std::size_t);
double dot(const double*, const double*, std::size_t);
double sum_sq(const double*, std::size_t);
void gemm_nn(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
void gemm_nt(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
void gemm_tn(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
}  // namespace avx2
#endif

#if defined(__aarch64__) && defined(__ARM_NEON)
namespace neon {
void add(const double*, const double*, double*, std::size_t);
void sub(const double*, const double*, double*, std::size_t);
void mul(const double*, const double*, double*, std::size_t);
void scale(const double*, double, double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
double sum(const double*, std::size_t);
double dot(const double*, const double*, std::size_t);
double sum_sq(const double*, std::size_t);
void gemm_nn(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
void gemm_nt(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
void gemm_tn(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
}  // namespace neon
#endif

namespace {

struct KernelTable {
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*sub)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*scale)(const double*, double, double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum_sq)(const double*, std::size_t);
  void (*gemm_nn)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
  void (*gemm_nt)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
  void (*gemm_tn)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
};

constexpr KernelTable kScalarTable = {
    scalar::add, scalar::sub,  scalar::mul,    scalar::scale,
    scalar::axpy, scalar::sum, scalar::dot,    scalar::sum_sq,
    scalar::gemm_nn, scalar::gemm_nt, scalar::gemm_tn};

#if defined(__x86_64__) || defined(_M_X64)
constexpr KernelTable kAvx2Table = {
    avx2::add, avx2::sub,  avx2::mul,    avx2::scale,
    avx2::axpy, avx2::sum, avx2::dot,    avx2::sum_sq,
    avx2::gemm_nn, avx2::gemm_nt, avx2::gemm_tn};
#endif

#if defined(__aarch64__) && defined(__ARM_NEON)
constexpr KernelTable kNeonTable = {
    neon::add, neon::sub,  neon::mul,    neon::scale,
    neon::axpy, neon::sum, neon::dot,    neon::sum_sq,
    neon::gemm_nn, neon::gemm_nt, neon::gemm_tn};
#endif

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar:
      return &kScalarTable;
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::avx2:
      return &kAvx2Table;
#endif
#if defined(__aarch64__) && defined(__ARM_NEON)
    case Backend::neon:
      return &kNeonTable;
#endif
    default:
      return nullptr;
  }
}

Backend detect_default() {
  if (const char* env = std::getenv("FLOWMATCH_BACKEND")) {
    const std::string v(env);
    Backend want = Backend::scalar;
    if (v == "avx2") want = Backend::avx2;
    else if (v == "neon") want = Backend::neon;
    else if (v != "scalar")
      throw ConfigError("FLOWMATCH_BACKEND must be scalar, avx2 or neon, got '" + v + "'");
    FM_CHECK(backend_available(want), ConfigError,
             "FLOWMATCH_BACKEND requests unavailable backend '", v, "'");
    return want;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (backend_available(Backend::avx2)) return Backend::avx2;
#endif
#if defined(__aarch64__) && defined(__ARM_NEON)
  return Backend::neon;
#endif
  return Backend::scalar;
}

struct State {
  Backend backend;
  const KernelTable* table;
  State() : backend(detect_default()), table(table_for(backend)) {}
};

State& state() {
  static State s;
  return s;
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon:
#if defined(__aarch64__) && defined(__ARM_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() { return state().backend; }

void set_backend(Backend b) {
  FM_CHECK(backend_available(b), ConfigError, "kernel backend '", backend_name(b),
           "' not available on this host");
  state().backend = b;
  state().table = table_for(b);
}

void add(const double* a, const double* b, double* dst, std::size_t n) {
  state().table->add(a, b, dst, n);
}
void sub(const double* a, const double* b, double* dst, std::size_t n) {
  state().table->sub(a, b, dst, n);
}
void mul(const double* a, const double* b, double* dst, std::size_t n) {
  state().table->mul(a, b, dst, n);
}
void scale(const double* a, double s, double* dst, std::size_t n) {
  state().table->scale(a, s, dst, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
  state().table->axpy(a, x, y, n);
}
double sum(const double* a, std::size_t n) { return state().table->sum(a, n); }
double dot(const double* a, const double* b, std::size_t n) {
  return state().table->dot(a, b, n);
}
double sum_sq(const double* a, std::size_t n) { return state().table->sum_sq(a, n); }
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  state().table->gemm_nn(m, n, k, a, b, c, accumulate);
}
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  state().table->gemm_nt(m, n, k, a, b, c, accumulate);
}
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  state().table->gemm_tn(m, n, k, a, b, c, accumulate);
}

}  // namespace flowmatch::kernels
