// AVX2/FMA single-precision kernels. This translation unit is compiled with
// -mavx2 -mfma; nothing here may be called unless avx2_available() is true.

#include "hadamax/kernels.hpp"

#if defined(HADAMAX_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>

namespace hadamax::kernels::avx2 {

namespace {

constexpr std::size_t kRows = 4;
constexpr std::size_t kCols = 16;
constexpr std::size_t kDepth = 256;

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, lo);
  lo = _mm_add_ss(lo, sh);
  return _mm_cvtss_f32(lo);
}

// 4x16 register tile: C[0..4, 0..16] += A[0..4, 0..kc] * B[0..kc, 0..16].
// A element (i, p) lives at a[i * ars + p * acs], which covers both A and A^T.
inline void tile_4x16(std::size_t kc, const float* a, std::size_t ars, std::size_t acs, const float* b,
                      std::size_t ldb, float* c, std::size_t ldc) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  const float* a0 = a;
  const float* a1 = a + ars;
  const float* a2 = a + 2 * ars;
  const float* a3 = a + 3 * ars;
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
    const __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
    const std::size_t q = p * acs;
    __m256 av = _mm256_broadcast_ss(a0 + q);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(a1 + q);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(a2 + q);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(a3 + q);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
  }
  auto store = [](float* dst, __m256 lo, __m256 hi) {
    _mm256_storeu_ps(dst, _mm256_add_ps(_mm256_loadu_ps(dst), lo));
    _mm256_storeu_ps(dst + 8, _mm256_add_ps(_mm256_loadu_ps(dst + 8), hi));
  };
  store(c, c00, c01);
  store(c + ldc, c10, c11);
  store(c + 2 * ldc, c20, c21);
  store(c + 3 * ldc, c30, c31);
}

inline void tile_1x16(std::size_t kc, const float* a, std::size_t acs, const float* b, std::size_t ldb, float* c) {
  __m256 c0 = _mm256_setzero_ps(), c1 = _mm256_setzero_ps();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256 av = _mm256_broadcast_ss(a + p * acs);
    c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b + p * ldb), c0);
    c1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b + p * ldb + 8), c1);
  }
  _mm256_storeu_ps(c, _mm256_add_ps(_mm256_loadu_ps(c), c0));
  _mm256_storeu_ps(c + 8, _mm256_add_ps(_mm256_loadu_ps(c + 8), c1));
}

// Row-by-row axpy form for column counts that are not a multiple of 16.
inline void edge_columns(std::size_t m, std::size_t n, std::size_t kc, const float* a, std::size_t ars,
                         std::size_t acs, const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * ldc;
    for (std::size_t p = 0; p < kc; ++p) {
      const float av = a[i * ars + p * acs];
      const float* brow = b + p * ldb;
      std::size_t j = 0;
      const __m256 vav = _mm256_set1_ps(av);
      for (; j + 8 <= n; j += 8)
        _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(vav, _mm256_loadu_ps(brow + j), _mm256_loadu_ps(crow + j)));
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t ars, std::size_t acs,
                  const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  const std::size_t n_main = n - n % kCols;
  for (std::size_t p0 = 0; p0 < k; p0 += kDepth) {
    const std::size_t kc = std::min(kDepth, k - p0);
    const float* ap = a + p0 * acs;
    const float* bp = b + p0 * ldb;
    for (std::size_t j = 0; j < n_main; j += kCols) {
      std::size_t i = 0;
      for (; i + kRows <= m; i += kRows) tile_4x16(kc, ap + i * ars, ars, acs, bp + j, ldb, c + i * ldc + j, ldc);
      for (; i < m; ++i) tile_1x16(kc, ap + i * ars, acs, bp + j, ldb, c + i * ldc + j);
    }
    if (n_main < n) edge_columns(m, n - n_main, kc, ap, ars, acs, bp + n_main, ldb, c + n_main, ldc);
  }
}

// exp(x) with range reduction to [-ln2/2, ln2/2] and a degree-5 polynomial.
inline __m256 exp_ps(__m256 x) {
  x = _mm256_min_ps(x, _mm256_set1_ps(88.3762626647949f));
  x = _mm256_max_ps(x, _mm256_set1_ps(-88.3762626647949f));
  __m256 fx = _mm256_fmadd_ps(x, _mm256_set1_ps(1.44269504088896341f), _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, _mm256_mul_ps(x, x), _mm256_add_ps(x, _mm256_set1_ps(1.0f)));
  __m256i e = _mm256_add_epi32(_mm256_cvttps_epi32(fx), _mm256_set1_epi32(127));
  return _mm256_mul_ps(y, _mm256_castsi256_ps(_mm256_slli_epi32(e, 23)));
}

// erf(x) ~ x P(x^2) / Q(x^2) on [-4, 4]; |error| < 5e-7.
inline __m256 erf_ps(__m256 x) {
  x = _mm256_min_ps(x, _mm256_set1_ps(4.0f));
  x = _mm256_max_ps(x, _mm256_set1_ps(-4.0f));
  const __m256 x2 = _mm256_mul_ps(x, x);
  __m256 p = _mm256_set1_ps(-2.72614225801306e-10f);
  p = _mm256_fmadd_ps(p, x2, _mm256_set1_ps(2.77068142495902e-08f));
  p = _mm256_fmadd_ps(p, x2, _mm256_set1_ps(-2.10102402082508e-06f));
  p = _mm256_fmadd_ps(p, x2, _mm256_set1_ps(-5.69250639462346e-05f));
  p = _mm256_fmadd_ps(p, x2, _mm256_set1_ps(-7.34990630326855e-04f));
  p = _mm256_fmadd_ps(p, x2, _mm256_set1_ps(-2.95459980854025e-03f));
  p = _mm256_fmadd_ps(p, x2, _mm256_set1_ps(-1.60960333262415e-02f));
  __m256 q = _mm256_set1_ps(-1.45660718464996e-05f);
  q = _mm256_fmadd_ps(q, x2, _mm256_set1_ps(-2.13374055278905e-04f));
  q = _mm256_fmadd_ps(q, x2, _mm256_set1_ps(-1.68282697438203e-03f));
  q = _mm256_fmadd_ps(q, x2, _mm256_set1_ps(-7.37332916720468e-03f));
  q = _mm256_fmadd_ps(q, x2, _mm256_set1_ps(-1.42647390514189e-02f));
  return _mm256_div_ps(_mm256_mul_ps(x, p), q);
}

constexpr float kInvSqrt2 = 0.70710678118654752f;
constexpr float kInvSqrt2Pi = 0.39894228040143268f;

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
          std::size_t ldb, float* c, std::size_t ldc) {
  gemm_strided(m, n, k, a, lda, 1, b, ldb, c, ldc);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc) {
  gemm_strided(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

void gelu_forward(std::size_t n, const float* x, float* out) {
  const __m256 half = _mm256_set1_ps(0.5f), one = _mm256_set1_ps(1.0f), s = _mm256_set1_ps(kInvSqrt2);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 cdf = _mm256_mul_ps(half, _mm256_add_ps(one, erf_ps(_mm256_mul_ps(v, s))));
    _mm256_storeu_ps(out + i, _mm256_mul_ps(v, cdf));
  }
  if (i < n) scalar::gelu_forward(n - i, x + i, out + i);
}

void gelu_backward(std::size_t n, const float* x, const float* g, float* gx) {
  const __m256 half = _mm256_set1_ps(0.5f), one = _mm256_set1_ps(1.0f), s = _mm256_set1_ps(kInvSqrt2);
  const __m256 mhalf = _mm256_set1_ps(-0.5f), norm = _mm256_set1_ps(kInvSqrt2Pi);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 cdf = _mm256_mul_ps(half, _mm256_add_ps(one, erf_ps(_mm256_mul_ps(v, s))));
    const __m256 pdf = _mm256_mul_ps(norm, exp_ps(_mm256_mul_ps(mhalf, _mm256_mul_ps(v, v))));
    const __m256 d = _mm256_fmadd_ps(v, pdf, cdf);
    _mm256_storeu_ps(gx + i, _mm256_fmadd_ps(_mm256_loadu_ps(g + i), d, _mm256_loadu_ps(gx + i)));
  }
  if (i < n) scalar::gelu_backward(n - i, x + i, g + i, gx + i);
}

float dot(std::size_t n, const float* x, const float* y) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  float s = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void hadamard(std::size_t n, const float* x, const float* y, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

}  // namespace hadamax::kernels::avx2

#else

#include <stdexcept>

namespace hadamax::kernels::avx2 {

[[noreturn]] static void unavailable() { throw std::logic_error("AVX2 kernels not compiled in"); }

void gemm(std::size_t, std::size_t, std::size_t, const float*, std::size_t, const float*, std::size_t, float*,
          std::size_t) {
  unavailable();
}
void gemm_tn(std::size_t, std::size_t, std::size_t, const float*, std::size_t, const float*, std::size_t, float*,
             std::size_t) {
  unavailable();
}
void gelu_forward(std::size_t, const float*, float*) { unavailable(); }
void gelu_backward(std::size_t, const float*, const float*, float*) { unavailable(); }
float dot(std::size_t, const float*, const float*) { unavailable(); }
void axpy(std::size_t, float, const float*, float*) { unavailable(); }
void hadamard(std::size_t, const float*, const float*, float*) { unavailable(); }

}  // namespace hadamax::kernels::avx2

#endif
