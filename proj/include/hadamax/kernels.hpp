#pragma once

// Inner-loop arithmetic used by the tensor engine and layers.
//
// Every kernel has a portable scalar reference in kernels::scalar. Single-precision
// kernels also have an AVX2/FMA variant in kernels::avx2, compiled in its own
// translation unit and chosen at runtime when the CPU supports it. Double
// precision always runs the scalar reference; it is the verification path.
//
// Setting HDX_KERNELS=scalar in the environment pins the scalar path.

#include <cstddef>
#include <string_view>

namespace hadamax::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// True when the AVX2 variants were compiled in and the CPU reports avx2+fma.
bool avx2_available();

/// ISA used by the dispatching entry points below.
Isa active_isa();

/// Overrides the dispatch choice (tests use this to compare variants).
/// Requesting avx2 on a machine without it is ignored.
void set_isa(Isa isa);

// C[m,n] += A[m,k] * B[k,n], all row-major with explicit leading dimensions.
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
          std::size_t ldb, float* c, std::size_t ldc);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double* c, std::size_t ldc);

// C[m,n] += A^T * B with A stored as [k,m].
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc);

// out = 0.5 x (1 + erf(x / sqrt 2))
void gelu_forward(std::size_t n, const float* x, float* out);
void gelu_forward(std::size_t n, const double* x, double* out);
// gx += g * (Phi(x) + x phi(x))
void gelu_backward(std::size_t n, const float* x, const float* g, float* gx);
void gelu_backward(std::size_t n, const double* x, const double* g, double* gx);

float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);

// y += alpha * x
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

// out = x * y, elementwise
void hadamard(std::size_t n, const float* x, const float* y, float* out);
void hadamard(std::size_t n, const double* x, const double* y, double* out);

// out[c, r] = in[r, c]
void transpose(std::size_t rows, std::size_t cols, const float* in, float* out);
void transpose(std::size_t rows, std::size_t cols, const double* in, double* out);

namespace scalar {
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
          T* c, std::size_t ldc);
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc);
template <typename T>
void gelu_forward(std::size_t n, const T* x, T* out);
template <typename T>
void gelu_backward(std::size_t n, const T* x, const T* g, T* gx);
template <typename T>
T dot(std::size_t n, const T* x, const T* y);
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <typename T>
void hadamard(std::size_t n, const T* x, const T* y, T* out);
}  // namespace scalar

namespace avx2 {
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
          std::size_t ldb, float* c, std::size_t ldc);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc);
void gelu_forward(std::size_t n, const float* x, float* out);
void gelu_backward(std::size_t n, const float* x, const float* g, float* gx);
float dot(std::size_t n, const float* x, const float* y);
void axpy(std::size_t n, float alpha, const float* x, float* y);
void hadamard(std::size_t n, const float* x, const float* y, float* out);
}  // namespace avx2

}  // namespace hadamax::kernels
