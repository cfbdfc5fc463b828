#include "viapt/prompt/viapt_forward.hpp"

#include <cmath>
#include <string>

#include "viapt/numerics/ops.hpp"
#include "viapt/numerics/svd.hpp"

namespace viapt {
namespace {

template <typename T>
Parameter<T> prompt_block(const std::string& name, std::size_t rows, std::size_t width,
                          const Rng& rng) {
  const double b = std::sqrt(6.0 / static_cast<double>(width + rows));
  Rng r = rng.derive(name);
  return Parameter<T>(name, r.sample_uniform<T>({rows, width}, b), true);
}

}  // namespace

template <typename T>
PromptParams<T> PromptParams<T>::init(const PromptConfig& cfg, const ViTConfig& vit,
                                      const Rng& rng) {
  PromptParams pp;
  pp.cfg = cfg;
  pp.dim = vit.dim;
  pp.layers = vit.layers;
  const std::size_t d = vit.dim;
  if (cfg.domain_tokens() > 0) pp.dom = prompt_block<T>("prompt.dom", cfg.domain_tokens(), d, rng);
  const Propagation prop = cfg.propagation(d);
  if (prop != Propagation::identity && cfg.p > 0) {
    pp.fresh.reserve(vit.layers);
    for (std::size_t i = 1; i < vit.layers; ++i)
      pp.fresh.push_back(prompt_block<T>("prompt.new." + std::to_string(i), cfg.p, d - cfg.m, rng));
  }
  if (prop == Propagation::random_projection) {
    Rng r = rng.derive("prompt.random_basis");
    pp.random_basis = random_orthonormal(d, cfg.m, r).cast<T>();
  }
  if (cfg.lambda > 0) pp.gen = Generator<T>::init(d, cfg.lambda, cfg.direct(), rng);
  return pp;
}

template <typename T>
std::vector<Parameter<T>*> PromptParams<T>::parameters() {
  std::vector<Parameter<T>*> out;
  if (dom) out.push_back(&*dom);
  for (auto& f : fresh) out.push_back(&f);
  if (gen)
    for (auto* p : gen->parameters()) out.push_back(p);
  return out;
}

template <typename T>
ViaptOutput<T> forward_viapt(const Var<T>& e0, PromptParams<T>& pp, Backbone<T>& bb,
                             const ForwardInputs<T>& in) {
  auto& tape = e0.tape();
  const PromptConfig& cfg = pp.cfg;
  const std::size_t d = bb.config.dim;
  if (pp.dim != d || pp.layers != bb.config.layers)
    throw ConfigError("prompt parameters were built for a different backbone");
  ViaptOutput<T> out;

  std::vector<Var<T>> first;
  if (cfg.lambda > 0) {
    InstancePrompts<T> ins;
    if (cfg.direct()) {
      ins = generate_direct_prompts(e0, *pp.gen);
    } else {
      if (!in.noise) throw ContractError("instance prompts need a noise block");
      ins = generate_instance_prompts(e0, *pp.gen, *in.noise);
      out.mu = ins.mu;
      out.logvar = ins.logvar;
    }
    first.push_back(ins.prompts);
  }
  if (pp.dom) first.push_back(tape.param(*pp.dom));
  if (first.empty())
    out.layer1_prompts = tape.constant(Tensor<T>({0, d}));
  else if (first.size() == 1)
    out.layer1_prompts = first[0];
  else
    out.layer1_prompts = ops::concat(first, 0);

  const Propagation prop = cfg.propagation(d);
  TokenSequence<T> seq{ops::reshape(tape.param(bb.cls_token), {1, d}), out.layer1_prompts, e0};
  for (std::size_t i = 0; i < bb.layers.size(); ++i) {
    if (i > 0 && cfg.p > 0) {
      switch (prop) {
        case Propagation::identity: break;
        case Propagation::fresh: seq.prompts = tape.param(pp.fresh[i - 1]); break;
        case Propagation::pca:
        case Propagation::random_projection: {
          PcaStats<T> stats;
          if (in.trace && in.trace->mode == ForwardTrace<T>::Mode::replay) {
            if (in.trace->cursor >= in.trace->stats.size())
              throw ContractError("forward trace exhausted during replay");
            stats = in.trace->stats[in.trace->cursor++];
          } else {
            stats = prop == Propagation::pca ? fit_pca(seq.prompts.value(), cfg.m)
                                             : fixed_basis_stats(seq.prompts.value(), pp.random_basis);
            if (in.trace) in.trace->stats.push_back(stats);
          }
          auto proj = apply_projection(seq.prompts, stats);
          out.retained_fraction.push_back(proj.retained_fraction());
          seq.prompts = assemble_combined(proj.coords, tape.param(pp.fresh[i - 1]));
          break;
        }
      }
    }
    seq = layer_forward(seq, bb.layers[i], bb.config);
  }
  out.logits = head(seq.cls, bb);
  return out;
}

#define VIAPT_INSTANTIATE_FWD(T)                                                        \
  template struct PromptParams<T>;                                                      \
  template ViaptOutput<T> forward_viapt(const Var<T>&, PromptParams<T>&, Backbone<T>&, \
                                        const ForwardInputs<T>&);

VIAPT_INSTANTIATE_FWD(float)
VIAPT_INSTANTIATE_FWD(double)

}  // namespace viapt
