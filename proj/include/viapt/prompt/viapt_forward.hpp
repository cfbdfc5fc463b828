#pragma once

#include <optional>
#include <vector>

#include "viapt/backbone/vit.hpp"
#include "viapt/prompt/generator.hpp"
#include "viapt/prompt/pca.hpp"
#include "viapt/prompt/prompt_config.hpp"

namespace viapt {

/// Trainable prompt-side state: layer-1 dataset tokens, per-layer learnable
/// remainders, and the optional instance generator.
template <typename T>
struct PromptParams {
  PromptConfig cfg;  // resolved
  std::size_t dim = 0;
  std::size_t layers = 0;
  std::optional<Parameter<T>> dom;  // "prompt.dom", (p - lambda) x d
  /// "prompt.new.i" for i = 1..N-1, p x (d - m). Empty when d - m == 0 or
  /// the propagation ignores it.
  std::vector<Parameter<T>> fresh;
  std::optional<Generator<T>> gen;
  /// Fixed d x m basis of the random-projection ablation (never trained).
  Tensor<T> random_basis;

  static PromptParams init(const PromptConfig& resolved, const ViTConfig& vit, const Rng& rng);
  std::vector<Parameter<T>*> parameters();
};

/// Replays PCA statistics between passes (finite-difference checks).
template <typename T>
struct ForwardTrace {
  enum class Mode { record, replay };
  Mode mode = Mode::record;
  std::vector<PcaStats<T>> stats;
  std::size_t cursor = 0;
};

template <typename T>
struct ForwardInputs {
  /// lambda x d standard normals; required when the generator is probabilistic.
  const Tensor<T>* noise = nullptr;
  ForwardTrace<T>* trace = nullptr;
};

template <typename T>
struct ViaptOutput {
  Var<T> logits;
  Var<T> mu;      // valid only with a probabilistic generator
  Var<T> logvar;
  Var<T> layer1_prompts;  // p x d block fed to layer 1
  std::vector<double> retained_fraction;  // per projected layer
};

/// Layer 1 sees [x_0, (P_ins ; P_dom), E_0]; layer i >= 2 sees the prompt
/// block derived from Z_{i-1} according to cfg.propagation().
template <typename T>
ViaptOutput<T> forward_viapt(const Var<T>& e0, PromptParams<T>& prompts, Backbone<T>& bb,
                             const ForwardInputs<T>& in = {});

}  // namespace viapt
