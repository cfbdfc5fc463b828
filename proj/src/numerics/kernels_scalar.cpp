#include "viapt/numerics/kernels.hpp"

namespace viapt::kernels {
namespace {

template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < M * N; ++i) C[i] = T(0);
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = A[i * K + k];
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      T s = 0;
      for (std::size_t k = 0; k < K; ++k) s += A[i * K + k] * B[j * K + k];
      C[i * N + j] = accumulate ? C[i * N + j] + s : s;
    }
  }
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < M * N; ++i) C[i] = T(0);
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = A[k * M + i];
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

template <typename T>
void axpy(std::size_t n, T a, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
void add(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale(std::size_t n, T s, T* x) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= s;
}

template <typename T>
constexpr KernelTable<T> kTable{Isa::scalar, gemm_nn<T>, gemm_nt<T>, gemm_tn<T>, axpy<T>,
                                dot<T>,      add<T>,     mul<T>,     scale<T>};

}  // namespace

template <>
const KernelTable<float>& scalar_table<float>() {
  return kTable<float>;
}
template <>
const KernelTable<double>& scalar_table<double>() {
  return kTable<double>;
}

}  // namespace viapt::kernels
