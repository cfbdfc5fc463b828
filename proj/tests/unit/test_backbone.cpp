#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "viapt/numerics/gradcheck.hpp"
#include "viapt/numerics/ops.hpp"

using namespace viapt;

namespace {

ViTConfig small_vit() {
  ViTConfig c;
  c.image_side = 8;
  c.patch = 4;
  c.dim = 8;
  c.layers = 3;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.classes = 3;
  return c;
}

// Non-trivial layer norm and bias values so the oracle comparisons exercise
// every parameter.
void perturb(Backbone<double>& bb, std::uint64_t seed) {
  Rng r(seed);
  for (auto* p : bb.parameters()) {
    if (p->value.rank() == 1)
      for (auto& v : p->value.data()) v += 0.2 * (2 * r.next_uniform() - 1);
  }
}

oracle::Mat rows(const Tensor<double>& t) { return oracle::to_mat(t); }

}  // namespace

TEST(Embedding, ZeroImageAndBiasGivesPositionEncoding) {
  auto bb = Backbone<double>::init(small_vit(), Rng(1));
  Tape<double> tape;
  auto e0 = embed_patches(tape, Tensor<double>({1, 8, 8}), bb);
  EXPECT_TRUE(bitwise_equal(e0.value(), sinusoidal_position_encoding(4, 8)));
}

TEST(Embedding, EightByEightWithTwoByTwoPatchesHasSixteenTokens) {
  ViTConfig c = small_vit();
  c.patch = 2;
  EXPECT_EQ(c.tokens(), 16u);
  EXPECT_EQ(extract_patches(oracle::random_tensor({1, 8, 8}, 1), c).shape(), (Shape{16, 4}));
}

TEST(Embedding, MatchesPerPatchOracle) {
  ViTConfig c = small_vit();
  c.channels = 2;
  auto bb = Backbone<double>::init(c, Rng(2));
  perturb(bb, 3);
  const auto image = oracle::random_tensor({2, 8, 8}, 4);
  Tape<double> tape;
  auto e0 = embed_patches(tape, image, bb);
  EXPECT_LT(max_abs_diff(e0.value(), oracle::from_mat(oracle::embed(image, bb), 8)), 1e-12);
}

TEST(Layer, ZeroResidualBranchesAreIdentity) {
  auto bb = Backbone<double>::init(small_vit(), Rng(3));
  auto& lp = bb.layers[0];
  lp.w_out.value.fill(0);
  lp.w_fc2.value.fill(0);
  Tape<double> tape;
  const auto token = oracle::random_tensor({1, 8}, 5);
  TokenSequence<double> seq{tape.constant(token), tape.constant(Tensor<double>({0, 8})),
                            tape.constant(Tensor<double>({0, 8}))};
  auto out = layer_forward(seq, lp, bb.config);
  EXPECT_TRUE(bitwise_equal(out.cls.value(), token));
}

TEST(Layer, AttentionRowsSumToOne) {
  auto bb = Backbone<double>::init(small_vit(), Rng(4));
  Tape<double> tape;
  TokenSequence<double> seq{tape.constant(oracle::random_tensor({1, 8}, 1)),
                            tape.constant(oracle::random_tensor({3, 8}, 2)),
                            tape.constant(oracle::random_tensor({4, 8}, 3))};
  std::vector<Tensor<double>> attention;
  layer_forward(seq, bb.layers[1], bb.config, &attention);
  ASSERT_EQ(attention.size(), 2u);
  for (auto& a : attention) {
    ASSERT_EQ(a.shape(), (Shape{8, 8}));
    for (std::size_t i = 0; i < 8; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 8; ++j) s += a(i, j);
      EXPECT_NEAR(s, 1.0, 1e-14);
    }
  }
}

TEST(Layer, MatchesStepByStepOracle) {
  auto bb = Backbone<double>::init(small_vit(), Rng(5));
  perturb(bb, 6);
  const auto cls = oracle::random_tensor({1, 8}, 1), pr = oracle::random_tensor({3, 8}, 2),
             img = oracle::random_tensor({4, 8}, 3);
  Tape<double> tape;
  auto out = layer_forward({tape.constant(cls), tape.constant(pr), tape.constant(img)},
                           bb.layers[0], bb.config);
  oracle::Mat seq = rows(cls);
  for (auto& r : rows(pr)) seq.push_back(r);
  for (auto& r : rows(img)) seq.push_back(r);
  const auto want = oracle::from_mat(oracle::block(seq, bb.layers[0], bb.config), 8);
  EXPECT_LT(max_abs_diff(concat_tokens(out).value(), want), 1e-10);
}

TEST(Forward, EmptyPromptEqualsPlainForward) {
  auto bb = Backbone<double>::init(small_vit(), Rng(6));
  Tape<double> tape;
  auto e0 = embed_patches(tape, oracle::random_tensor({1, 8, 8}, 1), bb);
  auto a = forward_plain(e0, bb);
  auto b = forward_vpt_shallow(e0, tape.constant(Tensor<double>({0, 8})), bb);
  EXPECT_TRUE(bitwise_equal(a.value(), b.value()));
}

TEST(Forward, ShallowMatchesMonolithicOracle) {
  auto bb = Backbone<double>::init(small_vit(), Rng(7));
  perturb(bb, 8);
  const auto image = oracle::random_tensor({1, 8, 8}, 2), prompts = oracle::random_tensor({3, 8}, 3);
  Tape<double> tape;
  auto logits = forward_vpt_shallow(embed_patches(tape, image, bb), tape.constant(prompts), bb);
  oracle::Mat seq = rows(bb.cls_token.value.reshaped({1, 8}));
  for (auto& r : rows(prompts)) seq.push_back(r);
  for (auto& r : oracle::embed(image, bb)) seq.push_back(r);
  for (auto& lp : bb.layers) seq = oracle::block(seq, lp, bb.config);
  const auto want = oracle::logits_from_cls(seq[0], bb);
  ASSERT_EQ(logits.shape(), (Shape{3}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(logits.value()[i], want[i], 1e-10);
}

TEST(Forward, DeepWithOneLayerAndSharedPromptEqualsShallow) {
  ViTConfig c = small_vit();
  c.layers = 1;
  auto bb = Backbone<double>::init(c, Rng(8));
  Tape<double> tape;
  auto e0 = embed_patches(tape, oracle::random_tensor({1, 8, 8}, 1), bb);
  auto p = tape.constant(oracle::random_tensor({2, 8}, 2));
  EXPECT_TRUE(bitwise_equal(forward_vpt_deep(e0, {p}, bb).value(),
                            forward_vpt_shallow(e0, p, bb).value()));
  EXPECT_THROW(forward_vpt_deep(e0, {p, p}, bb), DimensionError);
}

TEST(Forward, DeepDiscardsPreviousPromptOutputs) {
  auto bb = Backbone<double>::init(small_vit(), Rng(9));
  std::vector<Parameter<double>> prompts;
  for (int i = 0; i < 3; ++i)
    prompts.emplace_back("P" + std::to_string(i), oracle::random_tensor({2, 8}, 10 + i), true);
  Tape<double> tape;
  auto e0 = embed_patches(tape, oracle::random_tensor({1, 8, 8}, 1), bb);
  TokenSequence<double> seq{ops::reshape(tape.param(bb.cls_token), {1, 8}), tape.param(prompts[0]), e0};
  Var<double> z2;
  for (std::size_t i = 0; i < 3; ++i) {
    seq.prompts = tape.param(prompts[i]);
    seq = layer_forward(seq, bb.layers[i], bb.config);
    if (i == 1) z2 = seq.prompts;
  }
  auto logits = head(seq.cls, bb);
  tape.backward(ops::pick(logits, 0));
  double p3 = 0;
  for (double g : prompts[2].grad.data()) p3 = std::max(p3, std::abs(g));
  EXPECT_GT(p3, 0.0);
  const auto* g2 = tape.grad(z2);
  if (g2) {
    for (double g : g2->data()) EXPECT_EQ(g, 0.0);
  }
}

TEST(Head, ZeroWeightsGiveUniformSoftmax) {
  auto bb = Backbone<double>::init(small_vit(), Rng(10));
  bb.head_w.value.fill(0);
  bb.head_b.value.fill(0);
  Tape<double> tape;
  auto logits = head(tape.constant(oracle::random_tensor({1, 8}, 1)), bb);
  for (double v : logits.value().data()) EXPECT_EQ(v, 0.0);
  for (double v : ops::softmax(logits).value().data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3);
}

TEST(Head, GradientsMatchFiniteDifferences) {
  auto bb = Backbone<double>::init(small_vit(), Rng(11));
  bb.norm_gamma.set_trainable(true);
  bb.norm_beta.set_trainable(true);
  const auto cls = oracle::random_tensor({1, 8}, 2);
  LossBuilder<double> loss = [&](Tape<double>& t) {
    return ops::pick(ops::log_softmax(head(t.constant(cls), bb)), 1);
  };
  for (auto& e : check_gradients(loss, {&bb.head_w, &bb.head_b, &bb.norm_gamma, &bb.norm_beta}))
    EXPECT_LT(e.max_rel_error, 1e-6) << e.name;
}

TEST(Head, LogitsShapeFollowsClassCount) {
  for (std::size_t classes : {1u, 2u, 7u}) {
    ViTConfig c = small_vit();
    c.classes = classes;
    auto bb = Backbone<float>::init(c, Rng(1));
    Tape<float> tape;
    auto e0 = embed_patches(tape, Tensor<float>({1, 8, 8}), bb);
    EXPECT_EQ(forward_plain(e0, bb).shape(), (Shape{classes}));
  }
}

TEST(Backbone, ParameterCounts) {
  EXPECT_EQ(count_backbone_parameters(ViTConfig::vit_base()), 86567656u);
  auto bb = Backbone<double>::init(small_vit(), Rng(1));
  std::uint64_t n = 0;
  for (auto* p : bb.parameters()) n += p->value.size();
  EXPECT_EQ(n, count_backbone_parameters(small_vit()));
  std::size_t trainable = 0;
  for (auto* p : bb.parameters()) trainable += p->trainable;
  EXPECT_EQ(trainable, 2u);
}

TEST(Backbone, ConfigValidation) {
  ViTConfig c = small_vit();
  c.patch = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_vit();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Backbone, InitIsAFunctionOfNamesAndSeed) {
  auto a = Backbone<double>::init(small_vit(), Rng(12));
  auto b = Backbone<double>::init(small_vit(), Rng(12));
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(bitwise_equal(pa[i]->value, pb[i]->value));
  auto f = Backbone<float>::init(small_vit(), Rng(12));
  EXPECT_LT(max_abs_diff(f.layers[0].w_qkv.value.cast<double>(), a.layers[0].w_qkv.value), 1e-7);
}
