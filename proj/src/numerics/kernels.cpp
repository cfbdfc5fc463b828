#include "viapt/numerics/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

namespace viapt::kernels {

#ifndef VIAPT_HAVE_AVX2
template <>
const KernelTable<float>* avx2_table<float>() {
  return nullptr;
}
template <>
const KernelTable<double>* avx2_table<double>() {
  return nullptr;
}
#endif

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool cpu_supports_avx2() {
#if defined(__x86_64__) && defined(__GNUC__)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

namespace {

Isa detect() {
  if (const char* env = std::getenv("VIAPT_ISA"); env && std::string(env) == "scalar")
    return Isa::scalar;
  if (avx2_table<float>() != nullptr && cpu_supports_avx2()) return Isa::avx2;
  return Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && (avx2_table<float>() == nullptr || !cpu_supports_avx2()))
    isa = Isa::scalar;
  current().store(isa, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& active() {
  if (active_isa() == Isa::avx2) return *avx2_table<T>();
  return scalar_table<T>();
}

void* detail::scratch_buffer(std::size_t bytes) {
  thread_local std::vector<unsigned char> buffer;
  if (buffer.size() < bytes) buffer.resize(bytes);
  return buffer.data();
}

template const KernelTable<float>& active<float>();
template const KernelTable<double>& active<double>();

}  // namespace viapt::kernels
