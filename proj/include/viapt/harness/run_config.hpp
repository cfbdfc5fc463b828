#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "viapt/backbone/vit.hpp"
#include "viapt/harness/dataset.hpp"
#include "viapt/inference/inference.hpp"
#include "viapt/prompt/prompt_config.hpp"
#include "viapt/training/trainer.hpp"

namespace viapt {

enum class Precision { f32, f64 };
Precision parse_precision(std::string_view text);
std::string to_string(Precision p);

struct BackboneSpec {
  /// Archive to load; empty means pretrain one in memory from the fields below.
  std::string path;
  std::size_t epochs = 6;
  std::uint32_t samples = 1500;
  double lr = 1e-3;
  std::uint64_t seed = 7;
};

/// Everything a command needs. Serialized as flat "key = value" lines; see
/// RunConfig::keys() for the accepted names.
struct RunConfig {
  ViTConfig vit = ViTConfig::desk();
  PromptConfig prompt;
  TrainConfig train;
  InferenceConfig infer;
  SyntheticDatasetSpec data;
  /// Directory holding {train,val,test}.viad; empty means generate from `data`.
  std::string data_dir;
  BackboneSpec backbone;
  std::string out = "runs/default";
  Precision precision = Precision::f32;
  std::vector<std::size_t> m_list;  // empty: {0, d/4, d/2, 3d/4, d}
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  /// Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Reads "key = value" lines; '#' starts a comment.
  void apply_file(const std::filesystem::path& path);
  void apply_text(const std::string& text);

  std::map<std::string, std::string> to_kv() const;
  std::string to_text() const;
  nlohmann::json snapshot() const;

  std::vector<std::size_t> effective_m_list() const;
  static std::vector<std::string> keys();
};

}  // namespace viapt
