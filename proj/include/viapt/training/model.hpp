#pragma once

#include <json.hpp>

#include "viapt/backbone/vit.hpp"
#include "viapt/prompt/viapt_forward.hpp"
#include "viapt/training/checkpoint.hpp"
#include "viapt/training/optimizer.hpp"

namespace viapt {

nlohmann::json to_json(const ViTConfig& c);
ViTConfig vit_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PromptConfig& c);
PromptConfig prompt_config_from_json(const nlohmann::json& j);

/// Frozen backbone plus everything prompt tuning trains.
template <typename T>
struct Model {
  ViTConfig vit;
  PromptConfig prompt;  // resolved
  Backbone<T> backbone;
  PromptParams<T> prompts;

  /// Takes a (pretrained) backbone, freezes it, attaches a fresh head for
  /// `classes` labels and initializes the prompt side.
  static Model create(Backbone<T> backbone, const PromptConfig& requested, std::size_t classes,
                      const Rng& rng);

  /// Prompt tensors, generator, then head.
  std::vector<Parameter<T>*> trainable();
  /// Every tensor, backbone first.
  std::vector<Parameter<T>*> all();

  /// Forward for one image on `tape`.
  ViaptOutput<T> forward(Tape<T>& tape, const Tensor<T>& image, const Tensor<T>* noise,
                         ForwardTrace<T>* trace = nullptr);
};

/// lambda x d block of standard normals at draw index `draw` of `stream`
/// (counter offset draw * lambda * d).
template <typename T>
Tensor<T> noise_block(const Rng& stream, std::uint64_t draw, std::size_t lambda, std::size_t dim);

template <typename T>
Archive backbone_archive(Backbone<T>& bb, nlohmann::json metadata);
template <typename T>
Backbone<T> backbone_from_archive(const Archive& a);

/// Adam moments are stored as "adam.m:<name>" / "adam.v:<name>".
template <typename T>
Archive model_archive(Model<T>& model, const AdamState<T>* adam, nlohmann::json metadata);

template <typename T>
struct LoadedModel {
  Model<T> model;
  AdamState<T> adam;
  nlohmann::json metadata;
};

/// Throws FormatError on a dtype mismatch or any missing/misshapen tensor.
template <typename T>
LoadedModel<T> model_from_archive(const Archive& a);

/// Reads only the dtype tag of an archive's metadata ("f32"/"f64").
std::string archive_dtype(const Archive& a);

}  // namespace viapt
