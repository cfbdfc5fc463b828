#include "viapt/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "viapt/training/loss.hpp"
#include "viapt/training/schedule.hpp"

namespace viapt {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (warmup_epochs > epochs) throw ConfigError("warmup epochs exceed epochs");
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
}

nlohmann::json to_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},       {"split", m.split}, {"xent", m.xent},
          {"kl", m.kl},             {"total", m.total}, {"accuracy", m.accuracy},
          {"lr", m.lr},             {"wall_seconds", m.wall_seconds}};
}

template <typename T>
Tensor<T> validation_noise(const Model<T>& model, std::uint64_t seed) {
  if (!model.prompt.probabilistic()) return {};
  return noise_block<T>(Rng(seed).derive("val-noise"), 0, model.prompt.lambda, model.vit.dim);
}

template <typename T>
EvalStats evaluate_loss(Model<T>& model, const Dataset& data, const Tensor<T>* noise) {
  EvalStats st;
  LossAccumulator acc;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape<T> tape;
    auto out = model.forward(tape, data.image<T>(i), noise);
    auto obj = sample_objective(out.logits, data.labels[i], out.mu, out.logvar, model.prompt.beta, 1);
    acc.add(obj.xent, obj.kl);
    correct += obj.correct ? 1 : 0;
  }
  st.n = data.size();
  st.loss = acc.finish(model.prompt.beta);
  st.accuracy = st.n ? static_cast<double>(correct) / static_cast<double>(st.n) : 0.0;
  return st;
}

template <typename T>
TrainResult<T> train(Model<T> model, const TrainConfig& cfg, const Dataset& train_set,
                     const Dataset& val_set, const MetricsSink& sink) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("empty training split");
  if (train_set.classes != model.vit.classes)
    throw ConfigError("dataset class count does not match the model head");

  TrainResult<T> res;
  res.best = model;
  const std::size_t n = train_set.size();
  const std::size_t spe = (n + cfg.batch - 1) / cfg.batch;
  const std::size_t total_steps = cfg.epochs * spe;
  const std::size_t warmup_steps = cfg.warmup_epochs * spe;
  const Rng root(cfg.seed);
  const Rng shuffle_root = root.derive("shuffle");
  const Rng train_noise = root.derive("train-noise");
  const Tensor<T> val_noise = validation_noise(model, cfg.seed);
  const Tensor<T>* val_noise_ptr = val_noise.empty() ? nullptr : &val_noise;
  const bool sampled = model.prompt.probabilistic();
  const std::size_t lambda = model.prompt.lambda, d = model.vit.dim;
  auto params = model.trainable();

  bool have_best = false;
  std::vector<std::size_t> order(n);
  const auto t0 = std::chrono::steady_clock::now();
  auto seconds = [&] {
    return cfg.timing ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                      : 0.0;
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng sh = shuffle_root.derive(epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[sh.next_below(i)]);

    LossAccumulator acc;
    std::size_t correct = 0;
    double lr = 0;
    for (std::size_t b = 0; b < spe; ++b) {
      for (auto* p : params) p->zero_grad();
      lr = lr_schedule(res.steps, total_steps, warmup_steps, cfg.lr);
      const std::size_t lo = b * cfg.batch, hi = std::min(n, lo + cfg.batch);
      for (std::size_t pos = lo; pos < hi; ++pos) {
        const std::size_t idx = order[pos];
        Tensor<T> noise;
        if (sampled) noise = noise_block<T>(train_noise, (epoch - 1) * n + pos, lambda, d);
        Tape<T> tape;
        try {
          auto out = model.forward(tape, train_set.image<T>(idx), sampled ? &noise : nullptr);
          auto obj = sample_objective(out.logits, train_set.labels[idx], out.mu, out.logvar,
                                      model.prompt.beta, hi - lo);
          if (!std::isfinite(obj.xent) || !std::isfinite(obj.kl))
            throw NumericError("non-finite loss");
          tape.backward(obj.objective);
          acc.add(obj.xent, obj.kl);
          correct += obj.correct ? 1 : 0;
        } catch (const NumericError& e) {
          throw TrainingAborted(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                    ", step " + std::to_string(res.steps) +
                                    "; last good checkpoint is epoch " +
                                    std::to_string(res.best_epoch),
                                res.best_epoch);
        }
      }
      clip_global_norm(params, cfg.clip_norm);
      try {
        optimizer_step(params, res.adam, lr);
      } catch (const NumericError& e) {
        throw TrainingAborted(std::string(e.what()) + "; last good checkpoint is epoch " +
                                  std::to_string(res.best_epoch),
                              res.best_epoch);
      }
      ++res.steps;
    }

    EpochMetrics tm;
    tm.epoch = epoch;
    tm.split = "train";
    const LossValue tl = acc.finish(model.prompt.beta);
    tm.xent = tl.xent;
    tm.kl = tl.kl;
    tm.total = tl.total;
    tm.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    tm.lr = lr;
    tm.wall_seconds = seconds();
    res.metrics.push_back(tm);
    if (sink) sink(tm);

    const EvalStats vs = evaluate_loss(model, val_set, val_noise_ptr);
    EpochMetrics vm;
    vm.epoch = epoch;
    vm.split = "val";
    vm.xent = vs.loss.xent;
    vm.kl = vs.loss.kl;
    vm.total = vs.loss.total;
    vm.accuracy = vs.accuracy;
    vm.lr = lr;
    vm.wall_seconds = seconds();
    res.metrics.push_back(vm);
    if (sink) sink(vm);

    const bool better = !have_best || vs.accuracy > res.best_val.accuracy ||
                        (vs.accuracy == res.best_val.accuracy &&
                         vs.loss.total < res.best_val.loss.total);
    if (better) {
      have_best = true;
      res.best = model;
      res.best_epoch = epoch;
      res.best_val = vs;
    }
  }
  res.last = std::move(model);
  return res;
}

#define VIAPT_INSTANTIATE_TRAIN(T)                                                          \
  template Tensor<T> validation_noise(const Model<T>&, std::uint64_t);                      \
  template EvalStats evaluate_loss(Model<T>&, const Dataset&, const Tensor<T>*);            \
  template TrainResult<T> train(Model<T>, const TrainConfig&, const Dataset&, const Dataset&, \
                                const MetricsSink&);

VIAPT_INSTANTIATE_TRAIN(float)
VIAPT_INSTANTIATE_TRAIN(double)

}  // namespace viapt
