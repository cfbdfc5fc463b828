#include "viapt/backbone/vit.hpp"

#include <cmath>
#include <string>

#include "viapt/numerics/ops.hpp"

namespace viapt {

void ViTConfig::validate() const {
  if (image_side == 0 || patch == 0 || channels == 0 || dim == 0 || layers == 0 || heads == 0 ||
      mlp_ratio == 0 || classes == 0)
    throw ConfigError("ViT configuration has a zero extent");
  if (image_side % patch != 0) {
    throw ConfigError("image side " + std::to_string(image_side) + " is not divisible by patch " +
                      std::to_string(patch));
  }
  if (dim % heads != 0) {
    throw ConfigError("embed dim " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

ViTConfig ViTConfig::desk() { return ViTConfig{}; }

ViTConfig ViTConfig::vit_base() {
  ViTConfig c;
  c.image_side = 224;
  c.patch = 16;
  c.channels = 3;
  c.dim = 768;
  c.layers = 12;
  c.heads = 12;
  c.mlp_ratio = 4;
  c.classes = 1000;
  c.learned_position_embedding = true;
  return c;
}

std::uint64_t count_backbone_parameters(const ViTConfig& c) {
  const std::uint64_t d = c.dim, h = c.mlp_dim();
  std::uint64_t n = c.patch_dim() * d + d;  // patch projection
  n += d;                                   // class token
  if (c.learned_position_embedding) n += (c.tokens() + 1) * d;
  const std::uint64_t block = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * h + h) +
                              (h * d + d);
  n += c.layers * block;
  n += 2 * d;                    // final norm
  n += d * c.classes + c.classes;  // head
  return n;
}

Tensor<double> sinusoidal_position_encoding(std::size_t tokens, std::size_t dim) {
  Tensor<double> pe({tokens, dim});
  for (std::size_t pos = 0; pos < tokens; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * freq;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

template <typename T>
void LayerParams<T>::collect(std::vector<Parameter<T>*>& out) {
  for (auto* p : {&ln1_gamma, &ln1_beta, &w_qkv, &b_qkv, &w_out, &b_out, &ln2_gamma, &ln2_beta,
                  &w_fc1, &b_fc1, &w_fc2, &b_fc2})
    out.push_back(p);
}

namespace {

template <typename T>
Parameter<T> uniform_param(const std::string& name, Shape shape, double bound, const Rng& rng) {
  Rng r = rng.derive(name);
  return Parameter<T>(name, r.sample_uniform<T>(shape, bound), false);
}

template <typename T>
Parameter<T> const_param(const std::string& name, Shape shape, T value) {
  return Parameter<T>(name, Tensor<T>::full(std::move(shape), value), false);
}

double xavier(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

template <typename T>
Backbone<T> Backbone<T>::init(const ViTConfig& cfg, const Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.dim, h = cfg.mlp_dim();
  Backbone<T> bb;
  bb.config = cfg;
  bb.patch_w = uniform_param<T>("backbone.patch_w", {cfg.patch_dim(), d},
                                1.0 / std::sqrt(static_cast<double>(cfg.patch_dim())), rng);
  bb.patch_b = const_param<T>("backbone.patch_b", {d}, T(0));
  bb.cls_token = const_param<T>("backbone.cls_token", {d}, T(0));
  bb.position = sinusoidal_position_encoding(cfg.tokens(), d).cast<T>();
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const std::string pre = "backbone.layer" + std::to_string(i) + ".";
    LayerParams<T> lp;
    lp.ln1_gamma = const_param<T>(pre + "ln1_gamma", {d}, T(1));
    lp.ln1_beta = const_param<T>(pre + "ln1_beta", {d}, T(0));
    lp.w_qkv = uniform_param<T>(pre + "w_qkv", {d, 3 * d}, xavier(d, d), rng);
    lp.b_qkv = const_param<T>(pre + "b_qkv", {3 * d}, T(0));
    lp.w_out = uniform_param<T>(pre + "w_out", {d, d}, xavier(d, d), rng);
    lp.b_out = const_param<T>(pre + "b_out", {d}, T(0));
    lp.ln2_gamma = const_param<T>(pre + "ln2_gamma", {d}, T(1));
    lp.ln2_beta = const_param<T>(pre + "ln2_beta", {d}, T(0));
    lp.w_fc1 = uniform_param<T>(pre + "w_fc1", {d, h}, xavier(d, h), rng);
    lp.b_fc1 = const_param<T>(pre + "b_fc1", {h}, T(0));
    lp.w_fc2 = uniform_param<T>(pre + "w_fc2", {h, d}, xavier(h, d), rng);
    lp.b_fc2 = const_param<T>(pre + "b_fc2", {d}, T(0));
    bb.layers.push_back(std::move(lp));
  }
  bb.norm_gamma = const_param<T>("backbone.norm_gamma", {d}, T(1));
  bb.norm_beta = const_param<T>("backbone.norm_beta", {d}, T(0));
  bb.reset_head(cfg.classes, rng);
  bb.freeze_except_head();
  return bb;
}

template <typename T>
std::vector<Parameter<T>*> Backbone<T>::parameters() {
  std::vector<Parameter<T>*> out{&patch_w, &patch_b, &cls_token};
  for (auto& lp : layers) lp.collect(out);
  out.push_back(&norm_gamma);
  out.push_back(&norm_beta);
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

template <typename T>
void Backbone<T>::freeze_except_head() {
  for (auto* p : parameters()) p->set_trainable(p == &head_w || p == &head_b);
}

template <typename T>
void Backbone<T>::set_all_trainable() {
  for (auto* p : parameters()) p->set_trainable(true);
}

template <typename T>
void Backbone<T>::reset_head(std::size_t classes, const Rng& rng) {
  config.classes = classes;
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.dim));
  head_w = uniform_param<T>("head.w", {config.dim, classes}, bound, rng);
  head_b = const_param<T>("head.b", {classes}, T(0));
  head_w.set_trainable(true);
  head_b.set_trainable(true);
}

template <typename T>
Var<T> concat_tokens(const TokenSequence<T>& seq) {
  return ops::concat<T>({seq.cls, seq.prompts, seq.image}, 0);
}

template <typename T>
TokenSequence<T> split_tokens(const Var<T>& tokens, std::size_t prompt_count) {
  const std::size_t n = tokens.value().rows();
  if (n < 1 + prompt_count) throw DimensionError("token block shorter than cls + prompts");
  return {ops::slice(tokens, 0, 0, 1), ops::slice(tokens, 0, 1, 1 + prompt_count),
          ops::slice(tokens, 0, 1 + prompt_count, n)};
}

template <typename T>
Tensor<T> extract_patches(const Tensor<T>& image, const ViTConfig& cfg) {
  const std::size_t C = cfg.channels, S = cfg.image_side, P = cfg.patch, G = cfg.grid();
  if (image.shape() != Shape{C, S, S}) {
    throw DimensionError("image shape " + shape_string(image.shape()) + " does not match " +
                         shape_string({C, S, S}));
  }
  Tensor<T> patches({G * G, cfg.patch_dim()});
  for (std::size_t gy = 0; gy < G; ++gy)
    for (std::size_t gx = 0; gx < G; ++gx) {
      T* row = patches.ptr() + (gy * G + gx) * cfg.patch_dim();
      std::size_t k = 0;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < P; ++y)
          for (std::size_t x = 0; x < P; ++x)
            row[k++] = image[(c * S + gy * P + y) * S + gx * P + x];
    }
  return patches;
}

template <typename T>
Var<T> embed_patches(Tape<T>& tape, const Tensor<T>& image, Backbone<T>& bb) {
  auto patches = tape.constant(extract_patches(image, bb.config));
  auto proj = ops::linear(patches, tape.param(bb.patch_w), tape.param(bb.patch_b));
  return ops::add(proj, tape.constant(bb.position));
}

template <typename T>
TokenSequence<T> layer_forward(const TokenSequence<T>& seq, LayerParams<T>& lp,
                               const ViTConfig& cfg, std::vector<Tensor<T>>* attention) {
  auto& tape = seq.cls.tape();
  const std::size_t d = cfg.dim, hd = cfg.head_dim();
  const std::size_t p = seq.prompts.value().rows();
  auto x = concat_tokens(seq);

  auto h = ops::layer_norm(x, tape.param(lp.ln1_gamma), tape.param(lp.ln1_beta));
  auto qkv = ops::linear(h, tape.param(lp.w_qkv), tape.param(lp.b_qkv));
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
  std::vector<Var<T>> heads;
  heads.reserve(cfg.heads);
  for (std::size_t i = 0; i < cfg.heads; ++i) {
    auto q = ops::slice(qkv, 1, i * hd, (i + 1) * hd);
    auto k = ops::slice(qkv, 1, d + i * hd, d + (i + 1) * hd);
    auto v = ops::slice(qkv, 1, 2 * d + i * hd, 2 * d + (i + 1) * hd);
    auto a = ops::softmax(ops::scale(ops::matmul_nt(q, k), inv_sqrt));
    if (attention) attention->push_back(a.value());
    heads.push_back(ops::matmul(a, v));
  }
  auto attn = ops::linear(ops::concat(heads, 1), tape.param(lp.w_out), tape.param(lp.b_out));
  x = ops::add(x, attn);

  auto h2 = ops::layer_norm(x, tape.param(lp.ln2_gamma), tape.param(lp.ln2_beta));
  auto mlp = ops::linear(ops::gelu(ops::linear(h2, tape.param(lp.w_fc1), tape.param(lp.b_fc1))),
                         tape.param(lp.w_fc2), tape.param(lp.b_fc2));
  x = ops::add(x, mlp);
  return split_tokens(x, p);
}

template <typename T>
Var<T> head(const Var<T>& cls, Backbone<T>& bb) {
  auto& tape = cls.tape();
  auto row = cls.value().rank() == 1 ? ops::reshape(cls, {1, bb.config.dim}) : cls;
  auto normed = ops::layer_norm(row, tape.param(bb.norm_gamma), tape.param(bb.norm_beta));
  auto logits = ops::linear(normed, tape.param(bb.head_w), tape.param(bb.head_b));
  return ops::reshape(logits, {bb.config.classes});
}

namespace {

template <typename T>
Var<T> cls_row(Tape<T>& tape, Backbone<T>& bb) {
  return ops::reshape(tape.param(bb.cls_token), {1, bb.config.dim});
}

}  // namespace

template <typename T>
Var<T> forward_vpt_shallow(const Var<T>& e0, const Var<T>& prompts, Backbone<T>& bb) {
  auto& tape = e0.tape();
  TokenSequence<T> seq{cls_row(tape, bb), prompts, e0};
  for (auto& lp : bb.layers) seq = layer_forward(seq, lp, bb.config);
  return head(seq.cls, bb);
}

template <typename T>
Var<T> forward_vpt_deep(const Var<T>& e0, const std::vector<Var<T>>& prompts, Backbone<T>& bb) {
  if (prompts.size() != bb.layers.size()) {
    throw DimensionError("vpt-deep needs one prompt block per layer (" +
                         std::to_string(bb.layers.size()) + "), got " +
                         std::to_string(prompts.size()));
  }
  auto& tape = e0.tape();
  TokenSequence<T> seq{cls_row(tape, bb), prompts[0], e0};
  for (std::size_t i = 0; i < bb.layers.size(); ++i) {
    seq.prompts = prompts[i];
    seq = layer_forward(seq, bb.layers[i], bb.config);
  }
  return head(seq.cls, bb);
}

template <typename T>
Var<T> forward_plain(const Var<T>& e0, Backbone<T>& bb) {
  auto& tape = e0.tape();
  return forward_vpt_shallow(e0, tape.constant(Tensor<T>({0, bb.config.dim})), bb);
}

#define VIAPT_INSTANTIATE_VIT(T)                                                            \
  template struct LayerParams<T>;                                                           \
  template struct Backbone<T>;                                                              \
  template Var<T> concat_tokens(const TokenSequence<T>&);                                   \
  template TokenSequence<T> split_tokens(const Var<T>&, std::size_t);                       \
  template Tensor<T> extract_patches(const Tensor<T>&, const ViTConfig&);                   \
  template Var<T> embed_patches(Tape<T>&, const Tensor<T>&, Backbone<T>&);                  \
  template TokenSequence<T> layer_forward(const TokenSequence<T>&, LayerParams<T>&,         \
                                          const ViTConfig&, std::vector<Tensor<T>>*);       \
  template Var<T> head(const Var<T>&, Backbone<T>&);                                        \
  template Var<T> forward_vpt_shallow(const Var<T>&, const Var<T>&, Backbone<T>&);          \
  template Var<T> forward_vpt_deep(const Var<T>&, const std::vector<Var<T>>&, Backbone<T>&); \
  template Var<T> forward_plain(const Var<T>&, Backbone<T>&);

VIAPT_INSTANTIATE_VIT(float)
VIAPT_INSTANTIATE_VIT(double)

}  // namespace viapt
