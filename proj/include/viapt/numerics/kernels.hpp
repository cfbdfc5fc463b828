#pragma once

#include <cstddef>
#include <string_view>

// Dense inner-loop kernels. Every kernel exists as a portable scalar
// reference and, when the build and the CPU allow it, an AVX2/FMA variant.
// The active table is chosen once at startup; VIAPT_ISA=scalar in the
// environment (or force_isa) pins the reference path.

namespace viapt::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

template <typename T>
struct KernelTable {
  Isa isa;
  // All matrices are row-major and densely packed.
  // C[M x N] (+)= A[M x K] * B[K x N]
  void (*gemm_nn)(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
                  bool accumulate);
  // C[M x N] (+)= A[M x K] * B[N x K]^T
  void (*gemm_nt)(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
                  bool accumulate);
  // C[M x N] (+)= A[K x M]^T * B[K x N]
  void (*gemm_tn)(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
                  bool accumulate);
  // y += a * x
  void (*axpy)(std::size_t n, T a, const T* x, T* y);
  T (*dot)(std::size_t n, const T* x, const T* y);
  // out = a + b, out = a * b (out may alias a or b)
  void (*add)(std::size_t n, const T* a, const T* b, T* out);
  void (*mul)(std::size_t n, const T* a, const T* b, T* out);
  // x *= s
  void (*scale)(std::size_t n, T s, T* x);
};

template <typename T>
const KernelTable<T>& scalar_table();

/// nullptr when the AVX2 variants were not compiled in.
template <typename T>
const KernelTable<T>* avx2_table();

bool cpu_supports_avx2();

Isa active_isa();
/// Override the runtime choice; falls back to scalar if avx2 is unavailable.
void force_isa(Isa isa);

template <typename T>
const KernelTable<T>& active();

namespace detail {
/// Per-thread scratch memory reused across kernel calls (grown on demand).
void* scratch_buffer(std::size_t bytes);
}  // namespace detail

}  // namespace viapt::kernels
