#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "support/oracles.hpp"
#include "viapt/harness/dataset.hpp"
#include "viapt/numerics/ops.hpp"
#include "viapt/training/checkpoint.hpp"
#include "viapt/training/loss.hpp"
#include "viapt/training/model.hpp"
#include "viapt/training/optimizer.hpp"
#include "viapt/training/schedule.hpp"
#include "viapt/training/trainer.hpp"

using namespace viapt;

namespace {

ViTConfig tiny_vit() {
  ViTConfig c;
  c.image_side = 8;
  c.patch = 4;
  c.dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.classes = 3;
  return c;
}

PromptConfig tiny_prompt() {
  PromptConfig p;
  p.p = 4;
  p.lambda = 2;
  p.m = 2;
  p.beta = 0.1;
  return p;
}

template <typename T>
Model<T> tiny_model(std::uint64_t seed = 1) {
  return Model<T>::create(Backbone<T>::init(tiny_vit(), Rng(seed)), tiny_prompt(), 3,
                          Rng(seed).derive("model"));
}

DatasetSplits tiny_data(DatasetVariant v = DatasetVariant::class_template, double noise = 0.3) {
  SyntheticDatasetSpec s;
  s.variant = v;
  s.classes = 3;
  s.samples = 100;
  s.side = 8;
  s.noise = noise;
  s.seed = 4;
  return generate_dataset(s);
}

template <typename T>
bool same_values(Model<T>& a, Model<T>& b) {
  auto pa = a.all(), pb = b.all();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!bitwise_equal(pa[i]->value, pb[i]->value)) return false;
  return true;
}

}  // namespace

TEST(Loss, UniformLogitsGiveLogC) {
  Tape<double> tape;
  auto xent = cross_entropy(tape.constant(Tensor<double>({5})), 2);
  EXPECT_NEAR(xent.value().item(), std::log(5.0), 1e-15);
  EXPECT_THROW(cross_entropy(tape.constant(Tensor<double>({5})), 5), InputError);
}

TEST(Loss, ZeroBetaTotalIsCrossEntropy) {
  LossAccumulator acc;
  acc.add(1.5, 7.0);
  acc.add(0.5, 3.0);
  const auto v = acc.finish(0.0);
  EXPECT_EQ(v.total, v.xent);
  EXPECT_EQ(v.xent, 1.0);
  EXPECT_EQ(v.kl, 5.0);
}

TEST(Loss, BatchObjectiveMatchesClosedForm) {
  Rng r(3);
  const double beta = 0.3;
  const std::size_t batch = 4;
  double want = 0, got = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    const auto logits = r.sample_gaussian<double>({5});
    const auto mu = r.sample_gaussian<double>({6}), lv = r.sample_gaussian<double>({6});
    const std::size_t label = i % 5;
    double mx = -1e300, z = 0, kl = 0;
    for (double v : logits.data()) mx = std::max(mx, v);
    for (double v : logits.data()) z += std::exp(v - mx);
    const double xent = -(logits[label] - mx - std::log(z));
    for (std::size_t j = 0; j < 6; ++j) kl += 0.5 * (mu[j] * mu[j] + std::exp(lv[j]) - 1 - lv[j]);
    want += (xent + beta * kl) / static_cast<double>(batch);
    Tape<double> tape;
    auto obj = sample_objective(tape.constant(logits), label, tape.constant(mu), tape.constant(lv),
                                beta, batch);
    got += obj.objective.value().item();
    EXPECT_NEAR(obj.xent, xent, 1e-12);
    EXPECT_NEAR(obj.kl, kl, 1e-12);
  }
  EXPECT_NEAR(got, want, 1e-10);
}

TEST(Loss, NonFiniteLogitsAreNumericErrors) {
  Tape<double> tape;
  Tensor<double> bad({3});
  bad[1] = std::nan("");
  EXPECT_THROW(sample_objective(tape.constant(bad), 0, Var<double>(), Var<double>(), 0.0, 1),
               NumericError);
}

TEST(AdamW, ZeroGradientAndDecayLeaveParametersUnchanged) {
  Parameter<double> w("w", oracle::random_tensor({4}, 1), true);
  const auto before = w.value;
  AdamState<double> st;
  AdamWConfig cfg;
  cfg.weight_decay = 0;
  for (int i = 0; i < 5; ++i) optimizer_step({&w}, st, 0.1, cfg);
  EXPECT_TRUE(bitwise_equal(w.value, before));
}

TEST(AdamW, ScalarRecurrenceOracle) {
  Parameter<double> w("w", Tensor<double>({1}, {0.7}), true);
  AdamState<double> st;
  AdamWConfig cfg;
  const double g = 0.3, lr = 0.01;
  double x = 0.7, m = 0, v = 0;
  for (int t = 1; t <= 20; ++t) {
    w.grad[0] = g;
    optimizer_step({&w}, st, lr, cfg);
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t)), vh = v / (1 - std::pow(cfg.beta2, t));
    x = x * (1 - lr * cfg.weight_decay) - lr * mh / (std::sqrt(vh) + cfg.eps);
    EXPECT_NEAR(w.value[0], x, 1e-12) << "step " << t;
  }
  EXPECT_EQ(st.step, 20u);
}

TEST(AdamW, DecayOnlyShrinksGeometrically) {
  Parameter<double> w("w", Tensor<double>({2}, {1.0, -2.0}), true);
  AdamState<double> st;
  AdamWConfig cfg;
  cfg.weight_decay = 0.5;
  for (int t = 0; t < 3; ++t) optimizer_step({&w}, st, 0.1, cfg);
  EXPECT_NEAR(w.value[0], std::pow(0.95, 3), 1e-15);
  EXPECT_NEAR(w.value[1], -2 * std::pow(0.95, 3), 1e-15);
}

TEST(AdamW, NonFiniteGradientNamesTensorAndTouchesNothing) {
  Parameter<double> a("a", oracle::random_tensor({2}, 1), true), b("b", oracle::random_tensor({2}, 2), true);
  a.grad.fill(1);
  b.grad[1] = std::numeric_limits<double>::infinity();
  const auto a0 = a.value;
  AdamState<double> st;
  try {
    optimizer_step({&a, &b}, st, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_TRUE(bitwise_equal(a.value, a0));
  EXPECT_EQ(st.step, 0u);
}

TEST(AdamW, FrozenTensorsAreSkipped) {
  Parameter<double> f("f", oracle::random_tensor({2}, 1), false);
  const auto before = f.value;
  AdamState<double> st;
  optimizer_step({&f}, st, 0.1);
  EXPECT_TRUE(bitwise_equal(f.value, before));
  EXPECT_TRUE(st.moments.empty());
}

TEST(AdamW, GlobalNormClipping) {
  Parameter<double> a("a", Tensor<double>({2}), true), b("b", Tensor<double>({1}), true);
  a.grad = Tensor<double>({2}, {3, 0});
  b.grad = Tensor<double>({1}, {4});
  EXPECT_DOUBLE_EQ(clip_global_norm<double>({&a, &b}, 1.0), 5.0);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad[0], 0.8, 1e-15);
  EXPECT_NEAR(clip_global_norm<double>({&a, &b}, 2.0), 1.0, 1e-15);
  EXPECT_NEAR(b.grad[0], 0.8, 1e-15);
}

TEST(Schedule, WarmupPeakEndAndMidpoint) {
  const double base = 0.01;
  EXPECT_EQ(lr_schedule(0, 100, 10, base), 0.0);
  EXPECT_NEAR(lr_schedule(5, 100, 10, base), base / 2, 1e-18);
  EXPECT_EQ(lr_schedule(10, 100, 10, base), base);
  EXPECT_NEAR(lr_schedule(100, 100, 10, base), 0.0, 1e-18);
  EXPECT_NEAR(lr_schedule(55, 100, 10, base), base / 2, 1e-15);
  EXPECT_THROW(lr_schedule(101, 100, 10, base), ConfigError);
  EXPECT_THROW(lr_schedule(0, 10, 11, base), ConfigError);
  EXPECT_EQ(lr_schedule(0, 50, 0, base), base);
}

TEST(Checkpoint, ArchiveRoundTripIsByteIdentical) {
  Archive a;
  a.metadata = {{"kind", "test"}, {"n", 3}};
  a.entries.push_back(make_entry("x", oracle::random_tensor({2, 3}, 1)));
  a.entries.push_back(make_entry("y", oracle::random_tensor({4}, 2).cast<float>()));
  a.entries.push_back(make_entry("empty", Tensor<double>({0, 8})));
  const auto bytes = serialize_archive(a);
  const auto back = parse_archive(bytes);
  EXPECT_EQ(back.metadata, a.metadata);
  EXPECT_EQ(back.entries, a.entries);
  EXPECT_EQ(serialize_archive(back), bytes);
  EXPECT_TRUE(bitwise_equal(entry_tensor<double>(*back.find("x")), oracle::random_tensor({2, 3}, 1)));
  EXPECT_THROW(entry_tensor<double>(*back.find("y")), FormatError);
}

TEST(Checkpoint, EveryTruncationIsRejected) {
  Archive a;
  a.metadata = {{"kind", "test"}};
  a.entries.push_back(make_entry("x", oracle::random_tensor({3, 3}, 1)));
  const auto bytes = serialize_archive(a);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(n));
    EXPECT_THROW(parse_archive(cut), FormatError) << "length " << n;
  }
}

TEST(Checkpoint, CorruptionIsRejected) {
  Archive a;
  a.entries.push_back(make_entry("x", oracle::random_tensor({3, 3}, 1)));
  const auto bytes = serialize_archive(a);
  for (std::size_t i = 0; i < bytes.size(); i += 7) {
    auto bad = bytes;
    bad[i] ^= 0x40;
    EXPECT_THROW(parse_archive(bad), FormatError) << "byte " << i;
  }
}

TEST(Checkpoint, ModelSaveLoadSaveIsByteIdentical) {
  auto model = tiny_model<float>();
  AdamState<float> adam;
  for (auto* p : model.trainable()) p->grad.fill(0.25f);
  optimizer_step(model.trainable(), adam, 0.01);
  const auto first = serialize_archive(model_archive(model, &adam, {{"note", "x"}}));
  auto loaded = model_from_archive<float>(parse_archive(first));
  EXPECT_EQ(loaded.adam.step, 1u);
  EXPECT_TRUE(same_values(loaded.model, model));
  const auto second = serialize_archive(model_archive(loaded.model, &loaded.adam, loaded.metadata));
  EXPECT_EQ(first, second);
}

TEST(Checkpoint, CrossPrecisionLoadIsRejected) {
  auto model = tiny_model<double>();
  const auto a = model_archive<double>(model, nullptr, {});
  EXPECT_EQ(archive_dtype(a), "f64");
  EXPECT_THROW(model_from_archive<float>(a), FormatError);
  auto bb = Backbone<double>::init(tiny_vit(), Rng(1));
  EXPECT_THROW(backbone_from_archive<float>(backbone_archive(bb, {})), FormatError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "viapt_ckpt_test";
  std::filesystem::create_directories(dir);
  auto bb = Backbone<float>::init(tiny_vit(), Rng(2));
  write_archive(backbone_archive(bb, {{"epochs", 0}}), dir / "bb.ckpt");
  auto back = backbone_from_archive<float>(read_archive(dir / "bb.ckpt"));
  auto pa = bb.parameters(), pb = back.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(bitwise_equal(pa[i]->value, pb[i]->value));
  EXPECT_THROW(read_archive(dir / "missing.ckpt"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Trainer, ZeroEpochsReturnsInitialModel) {
  auto data = tiny_data();
  auto model = tiny_model<double>();
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.warmup_epochs = 0;
  auto res = train(model, cfg, data.train, data.val);
  EXPECT_TRUE(same_values(res.best, model));
  EXPECT_TRUE(same_values(res.last, model));
  EXPECT_TRUE(res.metrics.empty());
}

TEST(Trainer, ZeroLearningRateFullBatchChangesNothing) {
  auto data = tiny_data();
  auto model = tiny_model<double>();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.warmup_epochs = 0;
  cfg.lr = 0;
  cfg.batch = data.train.size();
  std::vector<EpochMetrics> seen;
  auto res = train(model, cfg, data.train, data.val, [&](const EpochMetrics& m) { seen.push_back(m); });
  EXPECT_TRUE(same_values(res.last, model));
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[0].split, "train");
  EXPECT_EQ(seen[1].split, "val");
  EXPECT_EQ(res.steps, 1u);
  EXPECT_EQ(seen[1].wall_seconds, 0.0);
}

TEST(Trainer, LearnsBetterThanChance) {
  auto data = tiny_data();
  auto model = tiny_model<float>();
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.warmup_epochs = 1;
  cfg.lr = 3e-3;
  cfg.batch = 10;
  auto res = train(model, cfg, data.train, data.val);
  ASSERT_EQ(res.metrics.size(), 16u);
  EXPECT_LT(res.metrics[14].xent, std::log(3.0));
  EXPECT_GT(res.best_val.accuracy, 1.0 / 3);
  EXPECT_GE(res.best_epoch, 1u);
  // Best epoch has the top validation accuracy.
  for (auto& m : res.metrics)
    if (m.split == "val") { EXPECT_LE(m.accuracy, res.best_val.accuracy); }
}

TEST(Trainer, RerunIsBitwiseDeterministic) {
  auto data = tiny_data();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.warmup_epochs = 1;
  cfg.batch = 16;
  auto a = train(tiny_model<float>(), cfg, data.train, data.val);
  auto b = train(tiny_model<float>(), cfg, data.train, data.val);
  EXPECT_TRUE(same_values(a.last, b.last));
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) EXPECT_EQ(to_json(a.metrics[i]), to_json(b.metrics[i]));
}

TEST(Trainer, ConfigValidation) {
  TrainConfig cfg;
  cfg.warmup_epochs = cfg.epochs + 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  auto data = tiny_data();
  data.train.classes = 4;
  cfg = TrainConfig{};
  cfg.warmup_epochs = 0;
  cfg.epochs = 1;
  EXPECT_THROW(train(tiny_model<float>(), cfg, data.train, data.val), ConfigError);
}

TEST(Trainer, DivergenceAbortsWithLastGoodEpoch) {
  auto data = tiny_data();
  auto model = tiny_model<double>();
  model.backbone.head_w.value.fill(std::numeric_limits<double>::infinity());
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.warmup_epochs = 0;
  try {
    train(model, cfg, data.train, data.val);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.last_good_epoch, 0u);
  }
}
