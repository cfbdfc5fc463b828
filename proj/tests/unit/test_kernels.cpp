#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "viapt/numerics/kernels.hpp"

using namespace viapt;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, std::uint64_t seed) {
  Rng r(seed);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(2 * r.next_uniform() - 1);
  return v;
}

template <typename T>
double tol() {
  return std::is_same_v<T, float> ? 1e-5 : 1e-13;
}

template <typename T>
void expect_close(const std::vector<T>& a, const std::vector<T>& b, double scale) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_NEAR(a[i], b[i], tol<T>() * scale) << "index " << i;
}

template <typename T>
class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!kernels::avx2_table<T>() || !kernels::cpu_supports_avx2())
      GTEST_SKIP() << "AVX2 variants unavailable on this build or CPU";
  }
  const kernels::KernelTable<T>& ref() { return kernels::scalar_table<T>(); }
  const kernels::KernelTable<T>& simd() { return *kernels::avx2_table<T>(); }
};

using Precisions = ::testing::Types<float, double>;
TYPED_TEST_SUITE(KernelEquivalence, Precisions);

}  // namespace

TYPED_TEST(KernelEquivalence, GemmVariantsAgreeOnRaggedSizes) {
  using T = TypeParam;
  const std::size_t sizes[][3] = {{1, 1, 1}, {3, 5, 7}, {8, 8, 8}, {17, 9, 33}, {5, 31, 4}, {64, 48, 48}};
  std::uint64_t seed = 1;
  for (auto& s : sizes) {
    const std::size_t M = s[0], N = s[1], K = s[2];
    auto A = random_vec<T>(M * K, seed++), B = random_vec<T>(K * N, seed++);
    auto Bt = random_vec<T>(N * K, seed++), At = random_vec<T>(K * M, seed++);
    for (bool acc : {false, true}) {
      auto C0 = random_vec<T>(M * N, seed), C1 = C0;
      this->ref().gemm_nn(M, N, K, A.data(), B.data(), C0.data(), acc);
      this->simd().gemm_nn(M, N, K, A.data(), B.data(), C1.data(), acc);
      expect_close(C0, C1, static_cast<double>(K));
      C0 = random_vec<T>(M * N, seed + 1), C1 = C0;
      this->ref().gemm_nt(M, N, K, A.data(), Bt.data(), C0.data(), acc);
      this->simd().gemm_nt(M, N, K, A.data(), Bt.data(), C1.data(), acc);
      expect_close(C0, C1, static_cast<double>(K));
      C0 = random_vec<T>(M * N, seed + 2), C1 = C0;
      this->ref().gemm_tn(M, N, K, At.data(), B.data(), C0.data(), acc);
      this->simd().gemm_tn(M, N, K, At.data(), B.data(), C1.data(), acc);
      expect_close(C0, C1, static_cast<double>(K));
    }
  }
}

TYPED_TEST(KernelEquivalence, VectorKernelsAgree) {
  using T = TypeParam;
  for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 15u, 16u, 100u, 1027u}) {
    auto x = random_vec<T>(n, 10 + n), y = random_vec<T>(n, 20 + n);
    auto y0 = y, y1 = y;
    this->ref().axpy(n, T(0.37), x.data(), y0.data());
    this->simd().axpy(n, T(0.37), x.data(), y1.data());
    expect_close(y0, y1, 1.0);

    EXPECT_NEAR(this->ref().dot(n, x.data(), y.data()), this->simd().dot(n, x.data(), y.data()),
                tol<T>() * static_cast<double>(n + 1));

    std::vector<T> a0(n), a1(n);
    this->ref().add(n, x.data(), y.data(), a0.data());
    this->simd().add(n, x.data(), y.data(), a1.data());
    expect_close(a0, a1, 1.0);
    this->ref().mul(n, x.data(), y.data(), a0.data());
    this->simd().mul(n, x.data(), y.data(), a1.data());
    expect_close(a0, a1, 1.0);

    auto s0 = x, s1 = x;
    this->ref().scale(n, T(-1.5), s0.data());
    this->simd().scale(n, T(-1.5), s1.data());
    expect_close(s0, s1, 1.0);
  }
}

TYPED_TEST(KernelEquivalence, AliasedElementwiseOutput) {
  using T = TypeParam;
  auto x = random_vec<T>(37, 3), y = random_vec<T>(37, 4);
  auto r0 = x, r1 = x;
  this->ref().add(37, r0.data(), y.data(), r0.data());
  this->simd().add(37, r1.data(), y.data(), r1.data());
  expect_close(r0, r1, 1.0);
}

TEST(KernelDispatch, ForcingScalarPinsReferenceTable) {
  const auto before = kernels::active_isa();
  kernels::force_isa(kernels::Isa::scalar);
  EXPECT_EQ(kernels::active<double>().isa, kernels::Isa::scalar);
  EXPECT_EQ(kernels::active<float>().isa, kernels::Isa::scalar);
  kernels::force_isa(before);
  EXPECT_EQ(kernels::active_isa(), before);
}

TEST(KernelDispatch, GemmMatchesTripleLoop) {
  const auto a = oracle::random_tensor({5, 7}, 1), b = oracle::random_tensor({7, 3}, 2);
  const auto want = oracle::matmul(a, b);
  for (auto isa : {kernels::Isa::scalar, kernels::Isa::avx2}) {
    const kernels::KernelTable<double>* t =
        isa == kernels::Isa::scalar ? &kernels::scalar_table<double>() : kernels::avx2_table<double>();
    if (!t || (isa == kernels::Isa::avx2 && !kernels::cpu_supports_avx2())) continue;
    Tensor<double> c({5, 3});
    t->gemm_nn(5, 3, 7, a.ptr(), b.ptr(), c.ptr(), false);
    EXPECT_LT(max_abs_diff(c, want), 1e-12) << kernels::isa_name(isa);
  }
}
