#include "viapt/prompt/param_count.hpp"

#include "viapt/prompt/generator.hpp"

namespace viapt {

std::uint64_t table_domain_only(std::size_t layers, std::size_t p, std::size_t d, std::size_t m) {
  return std::uint64_t{layers} * p * (d - m);
}

std::uint64_t table_ours(std::size_t layers, std::size_t p, std::size_t lambda, std::size_t d,
                         std::size_t m) {
  return (std::uint64_t{layers} * p - lambda) * (d - m) + std::uint64_t{lambda} * m;
}

std::uint64_t stored_prompt_parameters(const PromptConfig& c, const ViTConfig& vit) {
  const std::uint64_t d = vit.dim;
  std::uint64_t n = std::uint64_t{c.domain_tokens()} * d;
  if (c.propagation(vit.dim) != Propagation::identity)
    n += std::uint64_t{vit.layers - 1} * c.p * (d - c.m);
  return n;
}

ParamAccounting count_parameters(const PromptConfig& c, const ViTConfig& vit) {
  ParamAccounting a;
  a.prompt_params = table_ours(vit.layers, c.p, c.lambda, vit.dim, c.m);
  a.stored_prompt_params = stored_prompt_parameters(c, vit);
  a.generator_params = count_generator_parameters(vit.dim, c.lambda, c.direct());
  a.head_params = std::uint64_t{vit.dim} * vit.classes + vit.classes;
  a.total_trainable = a.stored_prompt_params + a.generator_params + a.head_params;
  a.backbone_params = count_backbone_parameters(vit);
  a.prompt_percent = 100.0 * static_cast<double>(a.prompt_params) /
                     static_cast<double>(a.backbone_params);
  a.ratio_of_backbone =
      static_cast<double>(a.total_trainable) / static_cast<double>(a.backbone_params);
  a.table_discrepancy = a.prompt_params != a.stored_prompt_params;
  if (a.table_discrepancy) {
    a.note = "table formula gives " + std::to_string(a.prompt_params) +
             " prompt parameters but the trained tensors hold " +
             std::to_string(a.stored_prompt_params);
    if (c.m == vit.dim && c.lambda == 0)
      a.note += " (the table counts the layer-1 block as zero at m = d)";
  }
  return a;
}

}  // namespace viapt
