#include "hadamax/kernels.hpp"

#include <cmath>
#include <numbers>

namespace hadamax::kernels::scalar {

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
          T* c, std::size_t ldc) {
  // i-p-j order: the innermost loop streams a row of B into a row of C.
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    const T* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[p * lda + i];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gelu_forward(std::size_t n, const T* x, T* out) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < n; ++i) out[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
}

template <typename T>
void gelu_backward(std::size_t n, const T* x, const T* g, T* gx) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
    gx[i] += g[i] * (cdf + v * pdf);
  }
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void hadamard(std::size_t n, const T* x, const T* y, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

template void gemm(std::size_t, std::size_t, std::size_t, const float*, std::size_t, const float*, std::size_t,
                   float*, std::size_t);
template void gemm(std::size_t, std::size_t, std::size_t, const double*, std::size_t, const double*, std::size_t,
                   double*, std::size_t);
template void gemm_tn(std::size_t, std::size_t, std::size_t, const float*, std::size_t, const float*, std::size_t,
                      float*, std::size_t);
template void gemm_tn(std::size_t, std::size_t, std::size_t, const double*, std::size_t, const double*, std::size_t,
                      double*, std::size_t);
template void gelu_forward(std::size_t, const float*, float*);
template void gelu_forward(std::size_t, const double*, double*);
template void gelu_backward(std::size_t, const float*, const float*, float*);
template void gelu_backward(std::size_t, const double*, const double*, double*);
template float dot(std::size_t, const float*, const float*);
template double dot(std::size_t, const double*, const double*);
template void axpy(std::size_t, float, const float*, float*);
template void axpy(std::size_t, double, const double*, double*);
template void hadamard(std::size_t, const float*, const float*, float*);
template void hadamard(std::size_t, const double*, const double*, double*);

}  // namespace hadamax::kernels::scalar
