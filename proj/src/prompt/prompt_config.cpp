#include "viapt/prompt/prompt_config.hpp"

#include <cmath>

namespace viapt {

PromptMode parse_prompt_mode(std::string_view text) {
  std::string s(text);
  for (auto& c : s)
    if (c == '-') c = '_';
  if (s == "viapt") return PromptMode::viapt;
  if (s == "vpt_shallow") return PromptMode::vpt_shallow;
  if (s == "vpt_deep") return PromptMode::vpt_deep;
  if (s == "ablation_no_pca" || s == "no_pca") return PromptMode::ablation_no_pca;
  if (s == "ablation_no_instance" || s == "no_instance") return PromptMode::ablation_no_instance;
  if (s == "ablation_random_projection" || s == "random_projection")
    return PromptMode::ablation_random_projection;
  if (s == "direct_generation" || s == "direct") return PromptMode::direct_generation;
  throw ConfigError("unknown prompt mode '" + std::string(text) + "'");
}

std::string to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::viapt: return "viapt";
    case PromptMode::vpt_shallow: return "vpt_shallow";
    case PromptMode::vpt_deep: return "vpt_deep";
    case PromptMode::ablation_no_pca: return "ablation_no_pca";
    case PromptMode::ablation_no_instance: return "ablation_no_instance";
    case PromptMode::ablation_random_projection: return "ablation_random_projection";
    case PromptMode::direct_generation: return "direct_generation";
  }
  return "?";
}

PromptConfig PromptConfig::resolved(const ViTConfig& vit) const {
  vit.validate();
  PromptConfig c = *this;
  const std::size_t d = vit.dim;
  switch (mode) {
    case PromptMode::vpt_shallow: c.m = d; c.lambda = 0; break;
    case PromptMode::vpt_deep: c.m = 0; c.lambda = 0; break;
    case PromptMode::ablation_no_instance: c.lambda = 0; break;
    case PromptMode::ablation_no_pca: c.m = d; break;
    default: break;
  }
  if (c.lambda > c.p) {
    throw ConfigError("lambda = " + std::to_string(c.lambda) + " exceeds p = " +
                      std::to_string(c.p));
  }
  if (c.m > d) throw ConfigError("m = " + std::to_string(c.m) + " exceeds d = " + std::to_string(d));
  if (!(c.beta >= 0.0) || !std::isfinite(c.beta)) throw ConfigError("beta must be finite and >= 0");
  if (c.lambda > 0) {
    const std::size_t k = vit.tokens();
    const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(k))));
    if (s * s != k) {
      throw ConfigError("instance prompts need a square token grid, k = " + std::to_string(k));
    }
    if (d % 2 != 0) throw ConfigError("instance generator needs an even embed dim");
  }
  return c;
}

Propagation PromptConfig::propagation(std::size_t d) const {
  if (m == d) return Propagation::identity;
  if (m == 0) return Propagation::fresh;
  if (mode == PromptMode::ablation_random_projection) return Propagation::random_projection;
  return Propagation::pca;
}

}  // namespace viapt
