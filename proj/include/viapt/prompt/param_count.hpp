#pragma once

#include <cstdint>
#include <string>

#include "viapt/backbone/vit.hpp"
#include "viapt/prompt/prompt_config.hpp"

namespace viapt {

/// Prompt counts in the form used by the published tables. Neither is the
/// literal tensor footprint; see ParamAccounting::stored_prompt_params.
std::uint64_t table_domain_only(std::size_t layers, std::size_t p, std::size_t d, std::size_t m);
std::uint64_t table_ours(std::size_t layers, std::size_t p, std::size_t lambda, std::size_t d,
                         std::size_t m);

/// Elements of the prompt tensors this implementation actually trains:
/// (p - lambda) * d layer-1 tokens plus (N - 1) * p * (d - m) remainders.
std::uint64_t stored_prompt_parameters(const PromptConfig& resolved, const ViTConfig& vit);

struct ParamAccounting {
  std::uint64_t prompt_params = 0;  // table formula: ours(m)
  std::uint64_t stored_prompt_params = 0;
  std::uint64_t generator_params = 0;
  std::uint64_t head_params = 0;
  std::uint64_t total_trainable = 0;  // stored prompts + generator + head
  std::uint64_t backbone_params = 0;  // whole ViT including its head
  double prompt_percent = 0;          // 100 * prompt_params / backbone_params
  double ratio_of_backbone = 0;       // total_trainable / backbone_params
  bool table_discrepancy = false;     // prompt_params != stored_prompt_params
  std::string note;
};

ParamAccounting count_parameters(const PromptConfig& resolved, const ViTConfig& vit);

}  // namespace viapt
