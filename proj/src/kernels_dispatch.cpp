#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

#include "hadamax/kernels.hpp"

namespace hadamax::kernels {

namespace {

Isa detect() {
  if (const char* pin = std::getenv("HDX_KERNELS"); pin && std::string(pin) == "scalar") return Isa::scalar;
  return avx2_available() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

bool use_avx2() { return current().load(std::memory_order_relaxed) == Isa::avx2; }

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool avx2_available() {
#if defined(HADAMAX_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_available()) return;
  current().store(isa, std::memory_order_relaxed);
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
          std::size_t ldb, float* c, std::size_t ldc) {
  if (use_avx2()) return avx2::gemm(m, n, k, a, lda, b, ldb, c, ldc);
  scalar::gemm(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double* c, std::size_t ldc) {
  scalar::gemm(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc) {
  if (use_avx2()) return avx2::gemm_tn(m, n, k, a, lda, b, ldb, c, ldc);
  scalar::gemm_tn(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
  scalar::gemm_tn(m, n, k, a, lda, b, ldb, c, ldc);
}

void gelu_forward(std::size_t n, const float* x, float* out) {
  if (use_avx2()) return avx2::gelu_forward(n, x, out);
  scalar::gelu_forward(n, x, out);
}
void gelu_forward(std::size_t n, const double* x, double* out) { scalar::gelu_forward(n, x, out); }

void gelu_backward(std::size_t n, const float* x, const float* g, float* gx) {
  if (use_avx2()) return avx2::gelu_backward(n, x, g, gx);
  scalar::gelu_backward(n, x, g, gx);
}
void gelu_backward(std::size_t n, const double* x, const double* g, double* gx) {
  scalar::gelu_backward(n, x, g, gx);
}

float dot(std::size_t n, const float* x, const float* y) {
  return use_avx2() ? avx2::dot(n, x, y) : scalar::dot(n, x, y);
}
double dot(std::size_t n, const double* x, const double* y) { return scalar::dot(n, x, y); }

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  if (use_avx2()) return avx2::axpy(n, alpha, x, y);
  scalar::axpy(n, alpha, x, y);
}
void axpy(std::size_t n, double alpha, const double* x, double* y) { scalar::axpy(n, alpha, x, y); }

void hadamard(std::size_t n, const float* x, const float* y, float* out) {
  if (use_avx2()) return avx2::hadamard(n, x, y, out);
  scalar::hadamard(n, x, y, out);
}
void hadamard(std::size_t n, const double* x, const double* y, double* out) { scalar::hadamard(n, x, y, out); }

namespace {
template <typename T>
void transpose_impl(std::size_t rows, std::size_t cols, const T* in, T* out) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock)
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock)
      for (std::size_t r = r0; r < std::min(rows, r0 + kBlock); ++r)
        for (std::size_t c = c0; c < std::min(cols, c0 + kBlock); ++c) out[c * rows + r] = in[r * cols + c];
}
}  // namespace

void transpose(std::size_t rows, std::size_t cols, const float* in, float* out) {
  transpose_impl(rows, cols, in, out);
}
void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
  transpose_impl(rows, cols, in, out);
}

}  // namespace hadamax::kernels
