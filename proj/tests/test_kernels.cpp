#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "hadamax/kernels.hpp"

namespace k = hadamax::kernels;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint32_t seed, float scale = 1.0f) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> d(0.0f, scale);
  std::vector<float> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

// Plain triple loop in double, the reference both variants answer to.
std::vector<double> naive_gemm(std::size_t m, std::size_t n, std::size_t kk, const std::vector<float>& a,
                               std::size_t lda, bool a_transposed, const std::vector<float>& b, std::size_t ldb,
                               const std::vector<float>& c0, std::size_t ldc) {
  std::vector<double> c(c0.begin(), c0.end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < kk; ++p) {
        const double av = a_transposed ? a[p * lda + i] : a[i * lda + p];
        s += av * static_cast<double>(b[p * ldb + j]);
      }
      c[i * ldc + j] += s;
    }
  return c;
}

class IsaGuard {
 public:
  IsaGuard() : saved_(k::active_isa()) {}
  ~IsaGuard() { k::set_isa(saved_); }

 private:
  k::Isa saved_;
};

struct GemmCase {
  std::size_t m, n, k;
};

// Odd sizes exercise the 4x16 tiles, the single-row tail and the column edge.
const GemmCase kCases[] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 8}, {5, 17, 9}, {17, 33, 65}, {64, 48, 32}, {13, 130, 3}};

}  // namespace

TEST(Kernels, ReportsIsa) {
  const auto name = k::isa_name(k::active_isa());
  EXPECT_TRUE(name == "scalar" || name == "avx2");
  if (!k::avx2_available()) EXPECT_EQ(k::active_isa(), k::Isa::scalar);
}

TEST(Kernels, GemmMatchesNaiveOnBothPaths) {
  IsaGuard guard;
  for (const auto& cs : kCases) {
    const std::size_t lda = cs.k + 3, ldb = cs.n + 1, ldc = cs.n + 2;
    const auto a = random_floats(cs.m * lda, 1);
    const auto b = random_floats(cs.k * ldb, 2);
    const auto c0 = random_floats(cs.m * ldc, 3);
    const auto want = naive_gemm(cs.m, cs.n, cs.k, a, lda, false, b, ldb, c0, ldc);
    for (k::Isa isa : {k::Isa::scalar, k::Isa::avx2}) {
      if (isa == k::Isa::avx2 && !k::avx2_available()) continue;
      k::set_isa(isa);
      auto c = c0;
      k::gemm(cs.m, cs.n, cs.k, a.data(), lda, b.data(), ldb, c.data(), ldc);
      for (std::size_t i = 0; i < cs.m; ++i)
        for (std::size_t j = 0; j < cs.n; ++j)
          ASSERT_NEAR(c[i * ldc + j], want[i * ldc + j], 1e-4 * (1.0 + std::sqrt(double(cs.k))))
              << k::isa_name(isa) << " m=" << cs.m << " n=" << cs.n << " k=" << cs.k;
      // padding between rows is never touched
      for (std::size_t i = 0; i < cs.m; ++i)
        for (std::size_t j = cs.n; j < ldc; ++j) ASSERT_EQ(c[i * ldc + j], c0[i * ldc + j]);
    }
  }
}

TEST(Kernels, GemmTransposedMatchesNaiveOnBothPaths) {
  IsaGuard guard;
  for (const auto& cs : kCases) {
    const std::size_t lda = cs.m + 2, ldb = cs.n, ldc = cs.n;
    const auto a = random_floats(cs.k * lda, 4);
    const auto b = random_floats(cs.k * ldb, 5);
    const std::vector<float> c0(cs.m * ldc, 0.5f);
    const auto want = naive_gemm(cs.m, cs.n, cs.k, a, lda, true, b, ldb, c0, ldc);
    for (k::Isa isa : {k::Isa::scalar, k::Isa::avx2}) {
      if (isa == k::Isa::avx2 && !k::avx2_available()) continue;
      k::set_isa(isa);
      auto c = c0;
      k::gemm_tn(cs.m, cs.n, cs.k, a.data(), lda, b.data(), ldb, c.data(), ldc);
      for (std::size_t i = 0; i < c.size(); ++i)
        ASSERT_NEAR(c[i], want[i], 1e-4 * (1.0 + std::sqrt(double(cs.k)))) << k::isa_name(isa);
    }
  }
}

TEST(Kernels, DoubleGemmIsExactOnIntegers) {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6};  // 2x3
  const std::vector<double> b = {7, 8, 9, 10, 11, 12};  // 3x2
  std::vector<double> c(4, 1.0);
  k::gemm(2, 2, 3, a.data(), 3, b.data(), 2, c.data(), 2);
  EXPECT_EQ(c, (std::vector<double>{59, 65, 140, 155}));
}

TEST(Kernels, VectorOpsAgreeAcrossPaths) {
  if (!k::avx2_available()) GTEST_SKIP() << "no AVX2 on this host";
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 31u, 1000u}) {
    const auto x = random_floats(n, 10 + n), y = random_floats(n, 20 + n);
    double ref = 0.0;
    for (std::size_t i = 0; i < n; ++i) ref += double(x[i]) * y[i];
    EXPECT_NEAR(k::avx2::dot(n, x.data(), y.data()), ref, 1e-4 * (1.0 + std::sqrt(double(n))));
    EXPECT_NEAR(k::scalar::dot(n, x.data(), y.data()), ref, 1e-4 * (1.0 + std::sqrt(double(n))));

    auto ya = y, ys = y;
    k::avx2::axpy(n, 0.75f, x.data(), ya.data());
    k::scalar::axpy(n, 0.75f, x.data(), ys.data());
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(ya[i], ys[i], 1e-6f);

    std::vector<float> ha(n), hs(n);
    k::avx2::hadamard(n, x.data(), y.data(), ha.data());
    k::scalar::hadamard(n, x.data(), y.data(), hs.data());
    EXPECT_EQ(ha, hs);  // one rounding each, bitwise equal
  }
}

TEST(Kernels, GeluAgreesAcrossPathsAndWithErf) {
  // Dense sweep including the clamped tails of the polynomial approximations.
  std::vector<float> x;
  for (float v = -12.0f; v <= 12.0f; v += 0.0137f) x.push_back(v);
  x.push_back(0.0f);
  const std::size_t n = x.size();
  const auto g = random_floats(n, 42);

  std::vector<float> ref(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    ref[i] = float(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
  }
  std::vector<float> fs(n), fa(n);
  k::scalar::gelu_forward(n, x.data(), fs.data());
  for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(fs[i], ref[i], 1e-6f * (1.0f + std::abs(ref[i])));

  std::vector<float> bs(n, 0.25f);
  k::scalar::gelu_backward(n, x.data(), g.data(), bs.data());
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    const double d = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))) + v * std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
    ASSERT_NEAR(bs[i], 0.25 + g[i] * d, 1e-5 * (1.0 + std::abs(g[i] * d)));
  }

  if (!k::avx2_available()) GTEST_SKIP() << "no AVX2 on this host";
  k::avx2::gelu_forward(n, x.data(), fa.data());
  for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(fa[i], fs[i], 2e-6f * (1.0f + std::abs(fs[i]))) << "x=" << x[i];
  std::vector<float> ba(n, 0.25f);
  k::avx2::gelu_backward(n, x.data(), g.data(), ba.data());
  for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(ba[i], bs[i], 2e-6f * (1.0f + std::abs(bs[i]))) << "x=" << x[i];
}

TEST(Kernels, TransposeRoundTrips) {
  const std::size_t r = 7, c = 19;
  const auto a = random_floats(r * c, 9);
  std::vector<float> t(r * c), back(r * c);
  k::transpose(r, c, a.data(), t.data());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ASSERT_EQ(t[j * r + i], a[i * c + j]);
  k::transpose(c, r, t.data(), back.data());
  EXPECT_EQ(back, a);
}
