#include "viapt/training/model.hpp"

#include <string>

namespace viapt {

nlohmann::json to_json(const ViTConfig& c) {
  return {{"image_side", c.image_side}, {"patch", c.patch},       {"channels", c.channels},
          {"dim", c.dim},               {"layers", c.layers},     {"heads", c.heads},
          {"mlp_ratio", c.mlp_ratio},   {"classes", c.classes},
          {"learned_position_embedding", c.learned_position_embedding}};
}

ViTConfig vit_config_from_json(const nlohmann::json& j) {
  try {
    ViTConfig c;
    c.image_side = j.at("image_side").get<std::size_t>();
    c.patch = j.at("patch").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.dim = j.at("dim").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    c.learned_position_embedding = j.at("learned_position_embedding").get<bool>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad vit metadata: ") + e.what());
  }
}

nlohmann::json to_json(const PromptConfig& c) {
  return {{"p", c.p}, {"lambda", c.lambda}, {"m", c.m}, {"beta", c.beta}, {"mode", to_string(c.mode)}};
}

PromptConfig prompt_config_from_json(const nlohmann::json& j) {
  try {
    PromptConfig c;
    c.p = j.at("p").get<std::size_t>();
    c.lambda = j.at("lambda").get<std::size_t>();
    c.m = j.at("m").get<std::size_t>();
    c.beta = j.at("beta").get<double>();
    c.mode = parse_prompt_mode(j.at("mode").get<std::string>());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad prompt metadata: ") + e.what());
  }
}

template <typename T>
Model<T> Model<T>::create(Backbone<T> backbone, const PromptConfig& requested, std::size_t classes,
                          const Rng& rng) {
  Model m;
  m.vit = backbone.config;
  m.vit.classes = classes;
  m.prompt = requested.resolved(m.vit);
  m.backbone = std::move(backbone);
  m.backbone.reset_head(classes, rng);
  m.backbone.freeze_except_head();
  m.prompts = PromptParams<T>::init(m.prompt, m.vit, rng);
  return m;
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::trainable() {
  auto out = prompts.parameters();
  out.push_back(&backbone.head_w);
  out.push_back(&backbone.head_b);
  return out;
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::all() {
  auto out = backbone.parameters();
  for (auto* p : prompts.parameters()) out.push_back(p);
  return out;
}

template <typename T>
ViaptOutput<T> Model<T>::forward(Tape<T>& tape, const Tensor<T>& image, const Tensor<T>* noise,
                                 ForwardTrace<T>* trace) {
  auto e0 = embed_patches(tape, image, backbone);
  ForwardInputs<T> in;
  in.noise = noise;
  in.trace = trace;
  return forward_viapt(e0, prompts, backbone, in);
}

template <typename T>
Tensor<T> noise_block(const Rng& stream, std::uint64_t draw, std::size_t lambda, std::size_t dim) {
  Rng r(stream.seed(), stream.counter() + draw * lambda * dim);
  return r.sample_gaussian<T>({lambda, dim});
}

namespace {

template <typename T>
void fill_from(const Archive& a, Parameter<T>& p) {
  const auto* e = a.find(p.name);
  if (!e) throw FormatError("archive is missing tensor '" + p.name + "'");
  auto t = entry_tensor<T>(*e);
  if (t.shape() != p.value.shape()) {
    throw FormatError("tensor '" + p.name + "' has shape " + shape_string(t.shape()) +
                      ", expected " + shape_string(p.value.shape()));
  }
  p.value = std::move(t);
}

template <typename T>
void require_dtype(const Archive& a) {
  const std::string want = to_string(dtype_of<T>());
  const std::string have = archive_dtype(a);
  if (have != want)
    throw FormatError("archive precision is " + have + " but this run uses " + want);
}

}  // namespace

std::string archive_dtype(const Archive& a) {
  if (!a.metadata.contains("dtype") || !a.metadata["dtype"].is_string())
    throw FormatError("archive metadata lacks a dtype field");
  return a.metadata["dtype"].get<std::string>();
}

template <typename T>
Archive backbone_archive(Backbone<T>& bb, nlohmann::json metadata) {
  Archive a;
  a.metadata = std::move(metadata);
  a.metadata["kind"] = "backbone";
  a.metadata["dtype"] = to_string(dtype_of<T>());
  a.metadata["vit"] = to_json(bb.config);
  for (auto* p : bb.parameters()) a.entries.push_back(make_entry(p->name, p->value));
  return a;
}

template <typename T>
Backbone<T> backbone_from_archive(const Archive& a) {
  require_dtype<T>(a);
  const ViTConfig vit = vit_config_from_json(a.metadata.at("vit"));
  auto bb = Backbone<T>::init(vit, Rng(0));
  for (auto* p : bb.parameters()) fill_from(a, *p);
  bb.freeze_except_head();
  return bb;
}

template <typename T>
Archive model_archive(Model<T>& model, const AdamState<T>* adam, nlohmann::json metadata) {
  Archive a;
  a.metadata = std::move(metadata);
  a.metadata["kind"] = "model";
  a.metadata["dtype"] = to_string(dtype_of<T>());
  a.metadata["vit"] = to_json(model.vit);
  a.metadata["prompt"] = to_json(model.prompt);
  a.metadata["adam_step"] = adam ? adam->step : 0;
  for (auto* p : model.all()) a.entries.push_back(make_entry(p->name, p->value));
  if (!model.prompts.random_basis.empty())
    a.entries.push_back(make_entry("prompt.random_basis", model.prompts.random_basis));
  if (adam) {
    for (const auto& m : adam->moments) {
      a.entries.push_back(make_entry("adam.m:" + m.name, m.m));
      a.entries.push_back(make_entry("adam.v:" + m.name, m.v));
    }
  }
  return a;
}

template <typename T>
LoadedModel<T> model_from_archive(const Archive& a) {
  require_dtype<T>(a);
  if (a.metadata.value("kind", "") != "model") throw FormatError("archive is not a model checkpoint");
  LoadedModel<T> out;
  Model<T>& m = out.model;
  m.vit = vit_config_from_json(a.metadata.at("vit"));
  m.prompt = prompt_config_from_json(a.metadata.at("prompt")).resolved(m.vit);
  m.backbone = Backbone<T>::init(m.vit, Rng(0));
  m.prompts = PromptParams<T>::init(m.prompt, m.vit, Rng(0));
  for (auto* p : m.all()) fill_from(a, *p);
  m.backbone.freeze_except_head();
  if (!m.prompts.random_basis.empty()) {
    const auto* e = a.find("prompt.random_basis");
    if (!e) throw FormatError("archive is missing tensor 'prompt.random_basis'");
    m.prompts.random_basis = entry_tensor<T>(*e);
  }
  out.adam.step = a.metadata.value("adam_step", std::uint64_t{0});
  for (auto* p : m.trainable()) {
    const auto* em = a.find("adam.m:" + p->name);
    const auto* ev = a.find("adam.v:" + p->name);
    if (!em || !ev) continue;
    out.adam.moments.push_back({p->name, entry_tensor<T>(*em), entry_tensor<T>(*ev)});
  }
  out.metadata = a.metadata;
  return out;
}

#define VIAPT_INSTANTIATE_MODEL(T)                                                            \
  template struct Model<T>;                                                                   \
  template Tensor<T> noise_block<T>(const Rng&, std::uint64_t, std::size_t, std::size_t);     \
  template Archive backbone_archive(Backbone<T>&, nlohmann::json);                            \
  template Backbone<T> backbone_from_archive<T>(const Archive&);                              \
  template Archive model_archive(Model<T>&, const AdamState<T>*, nlohmann::json);             \
  template LoadedModel<T> model_from_archive<T>(const Archive&);

VIAPT_INSTANTIATE_MODEL(float)
VIAPT_INSTANTIATE_MODEL(double)

}  // namespace viapt
