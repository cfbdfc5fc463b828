#pragma once

#include <cstdint>
#include <vector>

#include "viapt/numerics/autodiff.hpp"
#include "viapt/numerics/rng.hpp"

namespace viapt {

/// Convolutional encoder over the image-token grid. The probabilistic
/// variant ends in two maps d/2 -> d (mean, log-variance); the direct
/// variant ends in one map d/2 -> lambda*d that emits the prompts outright.
template <typename T>
struct Generator {
  std::size_t dim = 0;
  std::size_t lambda = 0;
  bool direct = false;
  Parameter<T> conv1_w, conv1_b;  // d/2 x d x 3 x 3
  Parameter<T> conv2_w, conv2_b;  // d/2 x d/2 x 3 x 3
  Parameter<T> mu_w, mu_b;        // d/2 x d
  Parameter<T> logvar_w, logvar_b;
  Parameter<T> direct_w, direct_b;  // d/2 x lambda*d

  static Generator init(std::size_t dim, std::size_t lambda, bool direct, const Rng& rng);
  std::vector<Parameter<T>*> parameters();
};

std::uint64_t count_generator_parameters(std::size_t dim, std::size_t lambda, bool direct);

/// Trunk output: conv -> GELU -> conv -> global average pool, shape [d/2].
template <typename T>
Var<T> encode_tokens(const Var<T>& e0, Generator<T>& gen);

template <typename T>
struct InstancePrompts {
  Var<T> prompts;  // lambda x d
  Var<T> mu;       // d (invalid in direct mode)
  Var<T> logvar;   // d
};

/// p^i = z^i * sigma + mu with sigma = exp(logvar / 2). `noise` is the
/// lambda x d block of standard normals; it enters as a constant so
/// gradients reach g only through mu and sigma.
template <typename T>
InstancePrompts<T> generate_instance_prompts(const Var<T>& e0, Generator<T>& gen,
                                             const Tensor<T>& noise);

template <typename T>
InstancePrompts<T> generate_direct_prompts(const Var<T>& e0, Generator<T>& gen);

/// 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar).
template <typename T>
Var<T> kl_to_standard_normal(const Var<T>& mu, const Var<T>& logvar);

}  // namespace viapt
