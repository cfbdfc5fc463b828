#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "viapt/numerics/autodiff.hpp"
#include "viapt/numerics/rng.hpp"

namespace viapt {

struct ViTConfig {
  std::size_t image_side = 16;
  std::size_t patch = 4;
  std::size_t channels = 1;
  std::size_t dim = 48;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t classes = 5;
  /// Only affects parameter counting: the trained toy backbone always uses
  /// fixed sinusoidal encodings, reference ViT-B/16 learns one per token.
  bool learned_position_embedding = false;

  std::size_t grid() const { return image_side / patch; }
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t patch_dim() const { return channels * patch * patch; }
  std::size_t head_dim() const { return dim / heads; }
  std::size_t mlp_dim() const { return dim * mlp_ratio; }

  /// Throws ConfigError on divisibility violations or zero extents.
  void validate() const;

  static ViTConfig desk();
  /// ViT-B/16 at 224 px with a 1000-way head (counting only).
  static ViTConfig vit_base();

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

/// Total parameter count of a standard ViT with this configuration: patch
/// projection, class token, optional learned position table over k+1
/// tokens, N pre-norm blocks, final norm and classification head.
std::uint64_t count_backbone_parameters(const ViTConfig& cfg);

template <typename T>
struct LayerParams {
  Parameter<T> ln1_gamma, ln1_beta;
  Parameter<T> w_qkv, b_qkv;  // d x 3d, 3d
  Parameter<T> w_out, b_out;  // d x d, d
  Parameter<T> ln2_gamma, ln2_beta;
  Parameter<T> w_fc1, b_fc1;  // d x hd, hd
  Parameter<T> w_fc2, b_fc2;  // hd x d, d

  void collect(std::vector<Parameter<T>*>& out);
};

/// Frozen transformer weights plus the (trainable) classification head.
template <typename T>
struct Backbone {
  ViTConfig config;
  Parameter<T> patch_w, patch_b;  // patch_dim x d, d
  Parameter<T> cls_token;         // d
  Tensor<T> position;             // k x d, fixed sinusoidal
  std::vector<LayerParams<T>> layers;
  Parameter<T> norm_gamma, norm_beta;
  Parameter<T> head_w, head_b;  // d x classes, classes

  static Backbone init(const ViTConfig& cfg, const Rng& rng);

  /// Every tensor in a fixed order (checkpoint order).
  std::vector<Parameter<T>*> parameters();
  /// Marks everything frozen except the head.
  void freeze_except_head();
  void set_all_trainable();
  /// Fresh head for a new label space (uniform fan-in init).
  void reset_head(std::size_t classes, const Rng& rng);
};

Tensor<double> sinusoidal_position_encoding(std::size_t tokens, std::size_t dim);

/// Per-layer token triple. cls is 1 x d, prompts p x d (p may be 0), image k x d.
template <typename T>
struct TokenSequence {
  Var<T> cls;
  Var<T> prompts;
  Var<T> image;
};

template <typename T>
Var<T> concat_tokens(const TokenSequence<T>& seq);
template <typename T>
TokenSequence<T> split_tokens(const Var<T>& tokens, std::size_t prompt_count);

/// Non-overlapping patches of a C x H x W image, one flattened row per patch
/// in raster order (channel-major within a patch).
template <typename T>
Tensor<T> extract_patches(const Tensor<T>& image, const ViTConfig& cfg);

/// E_0 = patches * W + b + sinusoidal position encoding.
template <typename T>
Var<T> embed_patches(Tape<T>& tape, const Tensor<T>& image, Backbone<T>& bb);

/// Pre-norm block over the concatenated [cls, prompts, image] sequence.
/// When `attention` is non-null the per-head attention matrices are appended.
template <typename T>
TokenSequence<T> layer_forward(const TokenSequence<T>& seq, LayerParams<T>& lp,
                               const ViTConfig& cfg,
                               std::vector<Tensor<T>>* attention = nullptr);

/// logits = Head(norm(x_N)).
template <typename T>
Var<T> head(const Var<T>& cls, Backbone<T>& bb);

/// Layer 1 sees [x_0, P_0, E_0]; later layers propagate the prompt outputs.
/// An empty (0 x d) prompt block gives the plain ViT forward.
template <typename T>
Var<T> forward_vpt_shallow(const Var<T>& e0, const Var<T>& prompts, Backbone<T>& bb);

/// Layer i discards Z_{i-1} and consumes fresh prompts[i-1]; one block per layer.
template <typename T>
Var<T> forward_vpt_deep(const Var<T>& e0, const std::vector<Var<T>>& prompts, Backbone<T>& bb);

template <typename T>
Var<T> forward_plain(const Var<T>& e0, Backbone<T>& bb);

}  // namespace viapt
