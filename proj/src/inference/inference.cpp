#include "viapt/inference/inference.hpp"

#include "viapt/numerics/ops.hpp"

namespace viapt {

Strategy parse_strategy(std::string_view text) {
  if (text == "multi" || text == "multi_round" || text == "multi-round") return Strategy::multi_round;
  if (text == "fixed" || text == "fixed_sampling" || text == "fixed-sampling")
    return Strategy::fixed_sampling;
  if (text == "direct") return Strategy::direct;
  throw ConfigError("unknown inference strategy '" + std::string(text) + "'");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::multi_round: return "multi_round";
    case Strategy::fixed_sampling: return "fixed_sampling";
    case Strategy::direct: return "direct";
  }
  return "?";
}

void InferenceConfig::validate() const {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
}

template <typename T>
Tensor<T> predict_once(Model<T>& model, const Tensor<T>& image, const Tensor<T>* noise) {
  Tape<T> tape;
  auto out = model.forward(tape, image, noise);
  return ops::softmax(out.logits).value();
}

template <typename T>
Tensor<T> predict_multi_round(Model<T>& model, const Tensor<T>& image, std::size_t rounds,
                              const Rng& stream, std::uint64_t image_index) {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (!model.prompt.probabilistic()) return predict_once<T>(model, image, nullptr);
  const std::size_t lambda = model.prompt.lambda, d = model.vit.dim;
  std::vector<Tensor<T>> probs;
  probs.reserve(rounds);
  for (std::size_t r = 0; r < rounds; ++r) {
    const Tensor<T> z = noise_block<T>(stream, image_index * rounds + r, lambda, d);
    probs.push_back(predict_once(model, image, &z));
  }
  bool identical = true;
  for (std::size_t r = 1; r < rounds && identical; ++r) identical = bitwise_equal(probs[r], probs[0]);
  if (identical) return probs[0];
  Tensor<T> mean(probs[0].shape());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    double s = 0;
    for (const auto& p : probs) s += static_cast<double>(p[i]);
    mean[i] = static_cast<T>(s / static_cast<double>(rounds));
  }
  return mean;
}

template <typename T>
Tensor<T> fixed_noise(const Model<T>& model, std::uint64_t noise_seed) {
  if (!model.prompt.probabilistic()) return {};
  return noise_block<T>(Rng(noise_seed), 0, model.prompt.lambda, model.vit.dim);
}

template <typename T>
Tensor<T> predict_fixed_sampling(Model<T>& model, const Tensor<T>& image, const Tensor<T>& noise) {
  return predict_once<T>(model, image, model.prompt.probabilistic() ? &noise : nullptr);
}

template <typename T>
Tensor<T> predict_direct(Model<T>& model, const Tensor<T>& image) {
  if (model.prompt.probabilistic()) {
    throw ModeMismatchError(
        "direct inference needs a model trained in direct_generation mode; this checkpoint has a "
        "probabilistic generator");
  }
  return predict_once<T>(model, image, nullptr);
}

template <typename T>
EvalSummary evaluate(Model<T>& model, const Dataset& data, const InferenceConfig& cfg) {
  cfg.validate();
  EvalSummary s;
  s.strategy = cfg.strategy;
  s.rounds = cfg.strategy == Strategy::multi_round ? cfg.rounds : 1;
  s.n = data.size();
  const Rng stream = Rng(cfg.seed).derive("inference");
  const Tensor<T> z = cfg.strategy == Strategy::fixed_sampling ? fixed_noise(model, cfg.seed)
                                                               : Tensor<T>();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor<T> image = data.image<T>(i);
    Tensor<T> p;
    switch (cfg.strategy) {
      case Strategy::multi_round: p = predict_multi_round(model, image, cfg.rounds, stream, i); break;
      case Strategy::fixed_sampling: p = predict_fixed_sampling(model, image, z); break;
      case Strategy::direct: p = predict_direct(model, image); break;
    }
    Prediction pred;
    pred.id = i;
    pred.probabilities.assign(p.data().begin(), p.data().end());
    for (std::size_t c = 1; c < p.size(); ++c)
      if (p[c] > p[pred.argmax]) pred.argmax = c;
    correct += pred.argmax == data.labels[i] ? 1 : 0;
    s.predictions.push_back(std::move(pred));
  }
  s.accuracy = s.n ? static_cast<double>(correct) / static_cast<double>(s.n) : 0.0;
  return s;
}

nlohmann::json summary_json(const EvalSummary& s) {
  return {{"strategy", to_string(s.strategy)}, {"R", s.rounds}, {"accuracy", s.accuracy}, {"n", s.n}};
}

nlohmann::json prediction_json(const Prediction& p, Strategy s) {
  return {{"id", p.id}, {"strategy", to_string(s)}, {"probabilities", p.probabilities},
          {"argmax", p.argmax}};
}

#define VIAPT_INSTANTIATE_INF(T)                                                              \
  template Tensor<T> predict_once(Model<T>&, const Tensor<T>&, const Tensor<T>*);             \
  template Tensor<T> predict_multi_round(Model<T>&, const Tensor<T>&, std::size_t, const Rng&, \
                                         std::uint64_t);                                      \
  template Tensor<T> fixed_noise(const Model<T>&, std::uint64_t);                             \
  template Tensor<T> predict_fixed_sampling(Model<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> predict_direct(Model<T>&, const Tensor<T>&);                             \
  template EvalSummary evaluate(Model<T>&, const Dataset&, const InferenceConfig&);

VIAPT_INSTANTIATE_INF(float)
VIAPT_INSTANTIATE_INF(double)

}  // namespace viapt
