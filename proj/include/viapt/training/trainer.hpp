#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "viapt/training/dataset.hpp"
#include "viapt/training/loss.hpp"
#include "viapt/training/model.hpp"

namespace viapt {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t batch = 32;
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 10;
  std::uint64_t seed = 1;
  double clip_norm = 1.0;
  /// Record real wall-clock seconds in metrics (otherwise 0, so metrics
  /// files stay byte-identical across reruns).
  bool timing = false;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double xent = 0, kl = 0, total = 0, accuracy = 0, lr = 0, wall_seconds = 0;
};

nlohmann::json to_json(const EpochMetrics& m);

struct EvalStats {
  LossValue loss;
  double accuracy = 0;
  std::size_t n = 0;
};

/// Validation pass: one forward per image, every image reusing the same
/// noise block (nullptr when the model has no sampling path).
template <typename T>
EvalStats evaluate_loss(Model<T>& model, const Dataset& data, const Tensor<T>* noise);

/// The fixed validation noise block of a run (empty tensor if none needed).
template <typename T>
Tensor<T> validation_noise(const Model<T>& model, std::uint64_t seed);

template <typename T>
struct TrainResult {
  Model<T> best;
  Model<T> last;
  AdamState<T> adam;
  std::vector<EpochMetrics> metrics;
  std::size_t best_epoch = 0;
  EvalStats best_val;
  std::uint64_t steps = 0;
};

/// Raised when the loss goes non-finite; carries the best epoch so far.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::size_t last_good_epoch)
      : NumericError(what), last_good_epoch(last_good_epoch) {}
  std::size_t last_good_epoch;
};

using MetricsSink = std::function<void(const EpochMetrics&)>;

/// Minibatch AdamW over the trainable tensors with a warmup + cosine
/// schedule and global-norm clipping. Emits a train and a val record per
/// epoch and keeps the best-validation model (accuracy, then lower loss,
/// then earlier epoch). With zero epochs the initial model is returned.
template <typename T>
TrainResult<T> train(Model<T> model, const TrainConfig& cfg, const Dataset& train_set,
                     const Dataset& val_set, const MetricsSink& sink = {});

}  // namespace viapt
