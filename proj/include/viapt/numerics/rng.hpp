#pragma once

#include <cstdint>
#include <string_view>

#include "viapt/numerics/tensor.hpp"

namespace viapt {

/// Counter-based random stream. Every draw is a pure function of
/// (seed, stream index), so a sample's value never depends on how many
/// workers consumed the stream or in which order.
///
/// Uniforms come from the SplitMix64 finalizer applied to a keyed counter.
/// Normals are produced in pairs by the Marsaglia polar method: pair q runs
/// its own rejection loop over uniforms indexed by (q, attempt), so normal i
/// is always the same value no matter how many rejections precede it.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-polar-v1";

  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void set_counter(std::uint64_t counter) noexcept { counter_ = counter; }

  /// Standard normal at absolute stream index (does not advance).
  double normal_at(std::uint64_t index) const;
  /// Uniform in [0, 1) at absolute stream index (does not advance).
  double uniform_at(std::uint64_t index) const;

  double next_normal() { return normal_at(counter_++); }
  double next_uniform() { return uniform_at(counter_++); }
  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

  /// i.i.d. N(0, 1) tensor; advances the counter by the element count.
  template <typename T>
  Tensor<T> sample_gaussian(const Shape& shape);

  /// i.i.d. U(-bound, bound) tensor; advances the counter by the element count.
  template <typename T>
  Tensor<T> sample_uniform(const Shape& shape, double bound);

  /// Child stream for a named purpose (parameter init, shuffling, ...).
  Rng derive(std::string_view label) const;
  Rng derive(std::uint64_t salt) const;

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

}  // namespace viapt
