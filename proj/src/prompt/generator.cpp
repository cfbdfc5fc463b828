#include "viapt/prompt/generator.hpp"

#include <cmath>
#include <string>

#include "viapt/numerics/ops.hpp"

namespace viapt {
namespace {

template <typename T>
Parameter<T> fan_in_uniform(const std::string& name, Shape shape, std::size_t fan_in,
                            const Rng& rng) {
  Rng r = rng.derive(name);
  return Parameter<T>(name, r.sample_uniform<T>(shape, 1.0 / std::sqrt(static_cast<double>(fan_in))),
                      true);
}

template <typename T>
Parameter<T> zero_bias(const std::string& name, std::size_t n) {
  return Parameter<T>(name, Tensor<T>(Shape{n}), true);
}

}  // namespace

template <typename T>
Generator<T> Generator<T>::init(std::size_t dim, std::size_t lambda, bool direct, const Rng& rng) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("generator needs an even embed dim >= 2");
  if (lambda == 0) throw ConfigError("generator requested with lambda = 0");
  const std::size_t h = dim / 2;
  Generator g;
  g.dim = dim;
  g.lambda = lambda;
  g.direct = direct;
  g.conv1_w = fan_in_uniform<T>("gen.conv1_w", {h, dim, 3, 3}, dim * 9, rng);
  g.conv1_b = zero_bias<T>("gen.conv1_b", h);
  g.conv2_w = fan_in_uniform<T>("gen.conv2_w", {h, h, 3, 3}, h * 9, rng);
  g.conv2_b = zero_bias<T>("gen.conv2_b", h);
  if (direct) {
    g.direct_w = fan_in_uniform<T>("gen.direct_w", {h, lambda * dim}, h, rng);
    g.direct_b = zero_bias<T>("gen.direct_b", lambda * dim);
  } else {
    g.mu_w = fan_in_uniform<T>("gen.mu_w", {h, dim}, h, rng);
    g.mu_b = zero_bias<T>("gen.mu_b", dim);
    g.logvar_w = fan_in_uniform<T>("gen.logvar_w", {h, dim}, h, rng);
    g.logvar_b = zero_bias<T>("gen.logvar_b", dim);
  }
  return g;
}

template <typename T>
std::vector<Parameter<T>*> Generator<T>::parameters() {
  std::vector<Parameter<T>*> out{&conv1_w, &conv1_b, &conv2_w, &conv2_b};
  if (direct) {
    out.push_back(&direct_w);
    out.push_back(&direct_b);
  } else {
    for (auto* p : {&mu_w, &mu_b, &logvar_w, &logvar_b}) out.push_back(p);
  }
  return out;
}

std::uint64_t count_generator_parameters(std::size_t dim, std::size_t lambda, bool direct) {
  if (lambda == 0) return 0;
  const std::uint64_t d = dim, h = dim / 2;
  const std::uint64_t trunk = (h * d * 9 + h) + (h * h * 9 + h);
  if (direct) return trunk + h * lambda * d + lambda * d;
  return trunk + 2 * (h * d + d);
}

template <typename T>
Var<T> encode_tokens(const Var<T>& e0, Generator<T>& gen) {
  auto& tape = e0.tape();
  const std::size_t k = e0.value().rows(), d = e0.value().cols();
  if (d != gen.dim) throw DimensionError("generator width does not match token width");
  const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(k))));
  if (s * s != k) throw ConfigError("token count " + std::to_string(k) + " is not a square grid");
  auto grid = ops::reshape(ops::transpose(e0), {d, s, s});
  auto h1 = ops::gelu(ops::conv2d(grid, tape.param(gen.conv1_w), tape.param(gen.conv1_b), 1, 1));
  auto h2 = ops::conv2d(h1, tape.param(gen.conv2_w), tape.param(gen.conv2_b), 1, 1);
  return ops::mean_axis(ops::reshape(h2, {d / 2, k}), 1);
}

template <typename T>
InstancePrompts<T> generate_instance_prompts(const Var<T>& e0, Generator<T>& gen,
                                             const Tensor<T>& noise) {
  if (gen.direct) throw ModeMismatchError("direct generator used for sampled prompts");
  if (noise.shape() != Shape{gen.lambda, gen.dim}) {
    throw DimensionError("noise block " + shape_string(noise.shape()) + " expected " +
                         shape_string({gen.lambda, gen.dim}));
  }
  auto& tape = e0.tape();
  auto h = encode_tokens(e0, gen);
  InstancePrompts<T> out;
  out.mu = ops::linear(h, tape.param(gen.mu_w), tape.param(gen.mu_b));
  out.logvar = ops::linear(h, tape.param(gen.logvar_w), tape.param(gen.logvar_b));
  auto sigma = ops::exp(ops::scale(out.logvar, T(0.5)));
  out.prompts = ops::add_row(ops::mul_row(tape.constant(noise), sigma), out.mu);
  return out;
}

template <typename T>
InstancePrompts<T> generate_direct_prompts(const Var<T>& e0, Generator<T>& gen) {
  if (!gen.direct) throw ModeMismatchError("probabilistic generator used for direct prompts");
  auto& tape = e0.tape();
  auto flat = ops::linear(encode_tokens(e0, gen), tape.param(gen.direct_w), tape.param(gen.direct_b));
  InstancePrompts<T> out;
  out.prompts = ops::reshape(flat, {gen.lambda, gen.dim});
  return out;
}

template <typename T>
Var<T> kl_to_standard_normal(const Var<T>& mu, const Var<T>& logvar) {
  auto terms = ops::sub(ops::add(ops::mul(mu, mu), ops::exp(logvar)), logvar);
  return ops::scale(ops::sum(ops::add_scalar(terms, T(-1))), T(0.5));
}

#define VIAPT_INSTANTIATE_GEN(T)                                                             \
  template struct Generator<T>;                                                              \
  template Var<T> encode_tokens(const Var<T>&, Generator<T>&);                               \
  template InstancePrompts<T> generate_instance_prompts(const Var<T>&, Generator<T>&,        \
                                                       const Tensor<T>&);                    \
  template InstancePrompts<T> generate_direct_prompts(const Var<T>&, Generator<T>&);         \
  template Var<T> kl_to_standard_normal(const Var<T>&, const Var<T>&);

VIAPT_INSTANTIATE_GEN(float)
VIAPT_INSTANTIATE_GEN(double)

}  // namespace viapt
