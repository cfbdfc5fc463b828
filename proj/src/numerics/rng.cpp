#include "viapt/numerics/rng.hpp"

#include <cmath>

namespace viapt {
namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kUniformDomain = 0xD1B54A32D192ED03ULL;
constexpr std::uint64_t kNormalDomain = 0x8CB92BA72F3D8DD7ULL;

double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

std::uint64_t keyed(std::uint64_t seed, std::uint64_t domain, std::uint64_t index,
                    std::uint64_t sub) {
  const std::uint64_t key = splitmix64_mix(seed ^ domain);
  return splitmix64_mix(key + splitmix64_mix(index + kGamma) + sub * kGamma);
}

// One polar-method pair; `which` selects the first or second variate.
double polar_pair(std::uint64_t seed, std::uint64_t pair, unsigned which) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    const double u = 2.0 * to_unit(keyed(seed, kNormalDomain, pair, 2 * attempt)) - 1.0;
    const double v = 2.0 * to_unit(keyed(seed, kNormalDomain, pair, 2 * attempt + 1)) - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      const double f = std::sqrt(-2.0 * std::log(s) / s);
      return which == 0 ? u * f : v * f;
    }
  }
}

}  // namespace

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

double Rng::normal_at(std::uint64_t index) const {
  return polar_pair(seed_, index / 2, static_cast<unsigned>(index % 2));
}

double Rng::uniform_at(std::uint64_t index) const {
  return to_unit(keyed(seed_, kUniformDomain, index, 0));
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  if (n == 0) return 0;
  const auto v = static_cast<std::uint64_t>(next_uniform() * static_cast<double>(n));
  return v < n ? v : n - 1;
}

template <typename T>
Tensor<T> Rng::sample_gaussian(const Shape& shape) {
  Tensor<T> out(shape);
  std::size_t i = 0;
  const std::size_t n = out.size();
  // Align to pair boundaries so each pair's rejection loop runs once.
  if (n > 0 && counter_ % 2 == 1) out[i++] = static_cast<T>(next_normal());
  while (i + 1 < n) {
    const std::uint64_t pair = counter_ / 2;
    out[i++] = static_cast<T>(polar_pair(seed_, pair, 0));
    out[i++] = static_cast<T>(polar_pair(seed_, pair, 1));
    counter_ += 2;
  }
  if (i < n) out[i++] = static_cast<T>(next_normal());
  return out;
}

template <typename T>
Tensor<T> Rng::sample_uniform(const Shape& shape, double bound) {
  Tensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>((2.0 * next_uniform() - 1.0) * bound);
  return out;
}

Rng Rng::derive(std::string_view label) const { return derive(fnv1a64(label)); }

Rng Rng::derive(std::uint64_t salt) const {
  return Rng(splitmix64_mix(seed_ ^ splitmix64_mix(salt + kGamma)), 0);
}

template Tensor<float> Rng::sample_gaussian<float>(const Shape&);
template Tensor<double> Rng::sample_gaussian<double>(const Shape&);
template Tensor<float> Rng::sample_uniform<float>(const Shape&, double);
template Tensor<double> Rng::sample_uniform<double>(const Shape&, double);

}  // namespace viapt
