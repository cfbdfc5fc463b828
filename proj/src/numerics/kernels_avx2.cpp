// AVX2/FMA variants of the kernel table. This translation unit is the only
// one compiled with -mavx2 -mfma; it must not instantiate templates shared
// with the rest of the program, so everything lives in an anonymous
// namespace and works on raw pointers.

#include <immintrin.h>

#include <cstdint>

#include "viapt/numerics/kernels.hpp"

namespace viapt::kernels {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr std::size_t W = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static __m256i mask(std::size_t n) {
    alignas(32) std::int32_t m[8];
    for (std::size_t i = 0; i < 8; ++i) m[i] = i < n ? -1 : 0;
    return _mm256_load_si256(reinterpret_cast<const __m256i*>(m));
  }
  static reg mload(const float* p, __m256i m) { return _mm256_maskload_ps(p, m); }
  static void mstore(float* p, __m256i m, reg v) { _mm256_maskstore_ps(p, m, v); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
};

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr std::size_t W = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static __m256i mask(std::size_t n) {
    alignas(32) std::int64_t m[4];
    for (std::size_t i = 0; i < 4; ++i) m[i] = i < n ? -1 : 0;
    return _mm256_load_si256(reinterpret_cast<const __m256i*>(m));
  }
  static reg mload(const double* p, __m256i m) { return _mm256_maskload_pd(p, m); }
  static void mstore(double* p, __m256i m, reg v) { _mm256_maskstore_pd(p, m, v); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

// Register-blocked update of an MR x (NV*W) tile of C. A is addressed as
// A[r*sa_i + k*sa_k] so the same body serves A and A^T. When kMasked is set
// the tile is a single partial vector (NV == 1) described by `mask`.
template <typename T, int MR, int NV, bool kMasked>
inline void tile(std::size_t K, const T* A, std::size_t sa_i, std::size_t sa_k, const T* B,
                 std::size_t ldb, T* C, std::size_t ldc, bool accumulate, __m256i mask) {
  using V = Vec<T>;
  using reg = typename V::reg;
  reg c[MR][NV];
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) {
      if (!accumulate) {
        c[r][v] = V::zero();
      } else if constexpr (kMasked) {
        c[r][v] = V::mload(C + r * ldc, mask);
      } else {
        c[r][v] = V::load(C + r * ldc + v * V::W);
      }
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    reg b[NV];
    const T* brow = B + k * ldb;
    for (int v = 0; v < NV; ++v) {
      if constexpr (kMasked) {
        b[v] = V::mload(brow, mask);
      } else {
        b[v] = V::load(brow + v * V::W);
      }
    }
    for (int r = 0; r < MR; ++r) {
      const reg a = V::set1(A[r * sa_i + k * sa_k]);
      for (int v = 0; v < NV; ++v) c[r][v] = V::fmadd(a, b[v], c[r][v]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    for (int v = 0; v < NV; ++v) {
      if constexpr (kMasked) {
        V::mstore(C + r * ldc, mask, c[r][v]);
      } else {
        V::store(C + r * ldc + v * V::W, c[r][v]);
      }
    }
  }
}

template <typename T, int NV, bool kMasked>
inline void column_panel(std::size_t M, std::size_t K, const T* A, std::size_t sa_i,
                         std::size_t sa_k, const T* B, std::size_t ldb, T* C, std::size_t ldc,
                         bool accumulate, __m256i mask) {
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4)
    tile<T, 4, NV, kMasked>(K, A + i * sa_i, sa_i, sa_k, B, ldb, C + i * ldc, ldc, accumulate,
                            mask);
  for (; i < M; ++i)
    tile<T, 1, NV, kMasked>(K, A + i * sa_i, sa_i, sa_k, B, ldb, C + i * ldc, ldc, accumulate,
                            mask);
}

template <typename T>
void gemm_strided(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t sa_i,
                  std::size_t sa_k, const T* B, T* C, bool accumulate) {
  using V = Vec<T>;
  if (K == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < M * N; ++i) C[i] = T(0);
    return;
  }
  const __m256i full = V::mask(V::W);
  std::size_t j = 0;
  for (; j + 2 * V::W <= N; j += 2 * V::W)
    column_panel<T, 2, false>(M, K, A, sa_i, sa_k, B + j, N, C + j, N, accumulate, full);
  for (; j + V::W <= N; j += V::W)
    column_panel<T, 1, false>(M, K, A, sa_i, sa_k, B + j, N, C + j, N, accumulate, full);
  if (j < N)
    column_panel<T, 1, true>(M, K, A, sa_i, sa_k, B + j, N, C + j, N, accumulate,
                             V::mask(N - j));
}

template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  gemm_strided(M, N, K, A, K, 1, B, C, accumulate);
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  gemm_strided(M, N, K, A, 1, M, B, C, accumulate);
}

template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  T* scratch = static_cast<T*>(detail::scratch_buffer(K * N * sizeof(T)));
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t k = 0; k < K; ++k) scratch[k * N + j] = B[j * K + k];
  gemm_strided(M, N, K, A, K, 1, scratch, C, accumulate);
}

template <typename T>
void axpy(std::size_t n, T a, const T* x, T* y) {
  using V = Vec<T>;
  const auto va = V::set1(a);
  std::size_t i = 0;
  for (; i + V::W <= n; i += V::W) V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
  using V = Vec<T>;
  auto acc = V::zero();
  std::size_t i = 0;
  for (; i + V::W <= n; i += V::W) acc = V::fmadd(V::load(x + i), V::load(y + i), acc);
  T s = V::hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
void add(std::size_t n, const T* a, const T* b, T* out) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::W <= n; i += V::W) V::store(out + i, V::add(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul(std::size_t n, const T* a, const T* b, T* out) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::W <= n; i += V::W) V::store(out + i, V::mul(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale(std::size_t n, T s, T* x) {
  using V = Vec<T>;
  const auto vs = V::set1(s);
  std::size_t i = 0;
  for (; i + V::W <= n; i += V::W) V::store(x + i, V::mul(vs, V::load(x + i)));
  for (; i < n; ++i) x[i] *= s;
}

template <typename T>
const KernelTable<T> kTable{Isa::avx2, gemm_nn<T>, gemm_nt<T>, gemm_tn<T>, axpy<T>,
                            dot<T>,    add<T>,     mul<T>,     scale<T>};

}  // namespace

template <>
const KernelTable<float>* avx2_table<float>() {
  return &kTable<float>;
}
template <>
const KernelTable<double>* avx2_table<double>() {
  return &kTable<double>;
}

}  // namespace viapt::kernels
