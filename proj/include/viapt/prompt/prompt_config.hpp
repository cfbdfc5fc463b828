#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "viapt/backbone/vit.hpp"

namespace viapt {

enum class PromptMode {
  viapt,
  vpt_shallow,
  vpt_deep,
  ablation_no_pca,
  ablation_no_instance,
  ablation_random_projection,
  direct_generation,
};

/// Accepts both underscore and dash spellings ("vpt-deep", "vpt_deep").
PromptMode parse_prompt_mode(std::string_view text);
std::string to_string(PromptMode mode);

/// How layer i >= 2 obtains its prompt block from Z_{i-1}.
enum class Propagation {
  identity,           // Z passes through unchanged (m = d, or PCA disabled)
  fresh,              // Z discarded, learnable p x d block (m = 0)
  pca,                // per-instance PCA coordinates + learnable remainder
  random_projection,  // fixed random basis coordinates + learnable remainder
};

struct PromptConfig {
  std::size_t p = 8;
  std::size_t lambda = 4;
  std::size_t m = 24;
  double beta = 0.01;
  PromptMode mode = PromptMode::viapt;

  /// Applies the mode overrides (vpt_shallow: m=d, lambda=0; vpt_deep: m=0,
  /// lambda=0; no_instance: lambda=0; no_pca: m=d) and validates the result
  /// against the backbone. Throws ConfigError before any compute.
  PromptConfig resolved(const ViTConfig& vit) const;

  Propagation propagation(std::size_t d) const;
  /// Probabilistic generator g is present (lambda > 0, not direct mode).
  bool probabilistic() const { return lambda > 0 && mode != PromptMode::direct_generation; }
  bool direct() const { return lambda > 0 && mode == PromptMode::direct_generation; }
  std::size_t domain_tokens() const { return p - lambda; }

  friend bool operator==(const PromptConfig&, const PromptConfig&) = default;
};

}  // namespace viapt
