#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "viapt/training/dataset.hpp"
#include "viapt/training/model.hpp"

namespace viapt {

enum class Strategy { multi_round, fixed_sampling, direct };

/// "multi"/"multi_round", "fixed"/"fixed_sampling", "direct".
Strategy parse_strategy(std::string_view text);
std::string to_string(Strategy s);

struct InferenceConfig {
  Strategy strategy = Strategy::multi_round;
  std::size_t rounds = 5;
  /// Seeds the multi-round stream and the fixed-sampling noise.
  std::uint64_t seed = 0;

  void validate() const;
};

/// Softmax of one forward with the given noise (nullptr when not sampled).
template <typename T>
Tensor<T> predict_once(Model<T>& model, const Tensor<T>& image, const Tensor<T>* noise);

/// Mean of R softmax vectors. Round r of image i draws its noise at counter
/// (i * R + r) * lambda * d of `stream`, so any evaluation order gives the
/// same result. Without a sampling path a single forward is returned.
template <typename T>
Tensor<T> predict_multi_round(Model<T>& model, const Tensor<T>& image, std::size_t rounds,
                              const Rng& stream, std::uint64_t image_index);

/// The lambda x d block every image shares under fixed sampling (empty when
/// the model does not sample).
template <typename T>
Tensor<T> fixed_noise(const Model<T>& model, std::uint64_t noise_seed);

template <typename T>
Tensor<T> predict_fixed_sampling(Model<T>& model, const Tensor<T>& image, const Tensor<T>& noise);

/// Throws ModeMismatchError on a model with a probabilistic generator.
template <typename T>
Tensor<T> predict_direct(Model<T>& model, const Tensor<T>& image);

struct Prediction {
  std::size_t id = 0;
  std::vector<double> probabilities;
  std::size_t argmax = 0;
};

struct EvalSummary {
  Strategy strategy = Strategy::multi_round;
  std::size_t rounds = 1;
  double accuracy = 0;
  std::size_t n = 0;
  std::vector<Prediction> predictions;
};

template <typename T>
EvalSummary evaluate(Model<T>& model, const Dataset& data, const InferenceConfig& cfg);

/// {strategy, R, accuracy, n}
nlohmann::json summary_json(const EvalSummary& s);
/// {id, strategy, probabilities, argmax}
nlohmann::json prediction_json(const Prediction& p, Strategy s);

}  // namespace viapt
