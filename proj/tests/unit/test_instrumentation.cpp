#include <random>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "helpers.hpp"
#include "iia/errors.hpp"
#include "iia/models/instrumented_model.hpp"

using namespace iia;

TEST(InstrumentCnn, CleanForwardMatchesRawNetwork) {
  auto net = testutil::tiny_cnn_network(1);
  CnnOptions o;
  o.name = "tiny";
  o.input_shape = {2, 8, 8};
  auto model = instrument_cnn(net, o);
  torch::NoGradGuard g;
  auto x = torch::randn({100, 2, 8, 8});
  auto raw = net->forward(x);
  auto logits = model->forward(x);
  EXPECT_TRUE(torch::equal(raw, logits));
  EXPECT_TRUE(torch::equal(raw.argmax(1), logits.argmax(1)));
}

TEST(InstrumentCnn, InjectingTheCaptureIsANoOp) {
  auto model = testutil::tiny_cnn(2);
  auto x = torch::randn({3, 2, 8, 8});
  TapSession s(*model);
  auto clean = s.forward_with_injections(x, {}).detach();
  for (int l = 0; l <= model->depth(); ++l) {
    auto u = s.tap(l).u.detach().clone();
    TapSession t(*model);
    auto logits = t.forward_with_injections(x, {{l, u}});
    EXPECT_TRUE(torch::equal(logits.detach(), clean)) << "layer " << l;
  }
}

TEST(InstrumentCnn, ZeroInjectionMatchesManualSurgery) {
  auto net = testutil::tiny_cnn_network(3);
  CnnOptions o;
  o.name = "tiny";
  o.input_shape = {2, 8, 8};
  auto model = instrument_cnn(net, o);
  auto x = torch::randn({2, 2, 8, 8});
  TapSession s(*model);
  torch::NoGradGuard g;
  auto h1 = net->stage(1, x);
  auto last = s.forward_with_injections(x, {{2, torch::zeros({2, 4, 4, 4})}});
  EXPECT_TRUE(torch::equal(last, net->classify(torch::zeros({2, 4, 4, 4}))));
  auto mid = s.forward_with_injections(x, {{1, torch::zeros_like(h1)}});
  EXPECT_TRUE(torch::equal(mid, net->classify(net->stage(2, torch::zeros_like(h1)))));
}

namespace {

// Second stage flattens, so it is not an activation map.
struct FlatteningNet : torch::nn::Cloneable<FlatteningNet>, StagedCnn {
  FlatteningNet() { reset(); }
  void reset() override { conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(1, 2, 3).padding(1))); }
  int num_stages() const override { return 2; }
  std::string stage_name(int index) const override { return index == 1 ? "conv" : "flatten"; }
  torch::Tensor stage(int index, const torch::Tensor& x) override { return index == 1 ? conv->forward(x) : x.flatten(1); }
  torch::Tensor classify(const torch::Tensor& f) override { return f.flatten(1).sum(1, true); }
  std::int64_t num_classes() const override { return 1; }
  std::vector<LayerGroup> layer_groups() override { return {}; }
  std::shared_ptr<StagedCnn> deep_copy() const override { return std::dynamic_pointer_cast<FlatteningNet>(clone()); }
  torch::nn::Module& module() override { return *this; }
  torch::nn::Conv2d conv{nullptr};
};

}  // namespace

TEST(InstrumentCnn, UndecomposableStageIsNamed) {
  CnnOptions o;
  o.name = "broken";
  o.input_shape = {1, 4, 4};
  try {
    instrument_cnn(std::make_shared<FlatteningNet>(), o);
    FAIL() << "expected InstrumentationError";
  } catch (const InstrumentationError& e) {
    EXPECT_NE(std::string(e.what()).find("flatten"), std::string::npos) << e.what();
  }
  o.input_shape = {3, 4, 4};
  try {
    instrument_cnn(std::make_shared<FlatteningNet>(), o);
    FAIL() << "expected InstrumentationError";
  } catch (const InstrumentationError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 1 (conv)"), std::string::npos) << e.what();
  }
}

TEST(InstrumentCnn, DefaultReferenceIsChannelMin) {
  auto model = testutil::tiny_cnn(1);
  EXPECT_EQ(model->default_reference(2).kind(), ReferencePolicy::Kind::channel_min);
  EXPECT_EQ(model->architecture(), Architecture::cnn);
  EXPECT_EQ(model->depth(), 2);
}

TEST(TapSession, BackwardBeforeForwardIsAStateError) {
  auto model = testutil::tiny_cnn(1);
  TapSession s(*model);
  EXPECT_THROW(s.backward_to_injection(0, 1), StateError);
  s.forward_with_injections(torch::randn({1, 2, 8, 8}), {}, 1);
  EXPECT_THROW(s.backward_to_injection(0, 0), StateError);
  EXPECT_THROW(s.backward_to_injection(0, 5), InstrumentationError);
  EXPECT_THROW(s.forward_with_injections(torch::randn({1, 2, 8, 8}), {{1, torch::zeros({1, 1})}}), InvalidArgument);
  EXPECT_THROW(s.forward_with_injections(torch::randn({1, 2, 8, 8}), {{9, torch::zeros({1, 1})}}), InstrumentationError);
}

TEST(TapSession, GradientShapeEqualsInjectionShape) {
  auto model = testutil::tiny_cnn(1);
  TapSession s(*model);
  auto x = torch::randn({3, 2, 8, 8});
  s.forward_with_injections(x, {}, 0);
  for (int l = 0; l <= 2; ++l) EXPECT_EQ(s.backward_to_injection(1, l).sizes(), s.tap(l).v.sizes());
}

TEST(TapSession, ConstantHeadHasZeroGradient) {
  auto net = std::make_shared<ConstantLogitsImpl>(std::vector<float>{0.1f, 0.2f, 0.3f});
  CnnOptions o;
  o.name = "constant";
  o.input_shape = {3, 4, 4};
  auto model = instrument_cnn(net, o);
  TapSession s(*model);
  s.forward_with_injections(torch::randn({2, 3, 4, 4}), {}, 0);
  auto g = s.backward_to_injection(2, 0);
  EXPECT_EQ(g.sizes(), (std::vector<std::int64_t>{2, 3, 4, 4}));
  EXPECT_TRUE(torch::all(g == 0).item<bool>());
}

namespace {

// Relative error of backward_to_injection against central differences on
// `coordinates` random entries of v^layer.
double worst_fd_error(const InstrumentedModel& model, const torch::Tensor& x, int layer, int class_index, int coordinates,
                      std::uint64_t seed) {
  TapSession s(model);
  s.forward_with_injections(x, {}, layer);
  auto v = s.tap(layer).v.detach().clone();
  auto grad = s.backward_to_injection(class_index, layer).flatten();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> pick(0, v.numel() - 1);
  const double h = 1e-6;
  double worst = 0.0;
  for (int c = 0; c < coordinates; ++c) {
    const auto i = pick(rng);
    auto plus = v.clone(), minus = v.clone();
    plus.view(-1)[i] += h;
    minus.view(-1)[i] -= h;
    TapSession t(model);
    torch::NoGradGuard g;
    const double fp = t.forward_with_injections(x, {{layer, plus}}, model.depth())[0][class_index].item<double>();
    const double fm = t.forward_with_injections(x, {{layer, minus}}, model.depth())[0][class_index].item<double>();
    const double fd = (fp - fm) / (2 * h);
    const double an = grad[i].item<double>();
    worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
  }
  return worst;
}

}  // namespace

TEST(TapSession, CnnGradientsMatchFiniteDifferences) {
  auto model = testutil::tiny_cnn(4, torch::kDouble);
  auto x = torch::randn({1, 2, 8, 8}, torch::kDouble);
  for (int l = 0; l <= 2; ++l) EXPECT_LT(worst_fd_error(*model, x, l, 1, 34, 100 + l), 1e-3) << "layer " << l;
}

TEST(TapSession, VitGradientsMatchFiniteDifferences) {
  auto model = testutil::tiny_vit(4, torch::kDouble);
  auto x = torch::rand({1, 3, 16, 16}, torch::kDouble);
  for (int l = 0; l <= model->depth(); ++l) EXPECT_LT(worst_fd_error(*model, x, l, 2, 34, 200 + l), 1e-3) << "layer " << l;
}

TEST(InstrumentVit, CleanForwardMatchesRawNetwork) {
  auto net = testutil::tiny_vit_network(5);
  VitOptions o;
  o.name = "tiny_vit";
  auto model = instrument_vit(net, o);
  torch::NoGradGuard g;
  auto x = torch::rand({100, 3, 16, 16});
  auto raw = net->forward(x);
  auto logits = model->forward(x);
  EXPECT_TRUE(torch::equal(raw, logits));
  EXPECT_TRUE(torch::equal(raw.argmax(1), logits.argmax(1)));
  EXPECT_EQ(model->architecture(), Architecture::vit);
  EXPECT_EQ(model->default_reference(1).kind(), ReferencePolicy::Kind::zero);
  ASSERT_TRUE(model->token_grid().has_value());
  EXPECT_EQ(model->token_grid()->rows, 4);
}

TEST(InstrumentVit, CapturedAttentionIsRowStochastic) {
  auto model = testutil::tiny_vit(6);
  TapSession s(*model);
  s.forward_with_injections(torch::rand({2, 3, 16, 16}), {});
  for (int l = 1; l <= model->depth(); ++l) {
    auto a = s.tap(l).u;
    ASSERT_EQ(a.sizes(), (std::vector<std::int64_t>{2, 2, 17, 17}));
    EXPECT_TRUE(torch::all(a >= 0).item<bool>());
    EXPECT_LT((a.sum(-1) - 1).abs().max().item<double>(), 1e-6);
  }
}

TEST(InstrumentVit, UniformAttentionMatchesManualSurgery) {
  auto net = testutil::tiny_vit_network(7);
  VitOptions o;
  o.name = "tiny_vit";
  auto model = instrument_vit(net, o);
  auto x = torch::rand({2, 3, 16, 16});
  auto uniform = torch::full({2, 2, 17, 17}, 1.0 / 17);
  for (int l = 1; l <= model->depth(); ++l) {
    TapSession s(*model);
    torch::NoGradGuard g;
    auto got = s.forward_with_injections(x, {{l, uniform}});
    auto tokens = net->embed(x);
    for (std::size_t b = 0; b < net->blocks->size(); ++b) {
      auto block = net->blocks->ptr<VitBlockImpl>(b);
      auto [attn, values] = block->attention(tokens);
      tokens = block->complete(tokens, static_cast<int>(b) + 1 == l ? uniform : attn, values);
    }
    EXPECT_TRUE(torch::allclose(got, net->classify(tokens), 0, 1e-6)) << "layer " << l;
  }
}

TEST(InstrumentVit, InjectingTheCaptureIsANoOp) {
  auto model = testutil::tiny_vit(8);
  auto x = torch::rand({1, 3, 16, 16});
  TapSession s(*model);
  auto clean = s.forward_with_injections(x, {}).detach();
  for (int l = 0; l <= model->depth(); ++l) {
    TapSession t(*model);
    EXPECT_TRUE(torch::equal(t.forward_with_injections(x, {{l, s.tap(l).u.detach().clone()}}).detach(), clean));
  }
}

TEST(Clone, SharedAndDeepCopies) {
  auto model = testutil::tiny_cnn(9);
  auto x = torch::randn({2, 2, 8, 8});
  torch::NoGradGuard g;
  auto shared = model->clone(true);
  auto deep = model->clone(false);
  EXPECT_TRUE(torch::equal(shared->forward(x), model->forward(x)));
  EXPECT_TRUE(torch::equal(deep->forward(x), model->forward(x)));
  auto groups = deep->layer_groups();
  ASSERT_EQ(groups.size(), 3u);
  reinitialize(groups.back(), 1);
  EXPECT_FALSE(torch::equal(deep->forward(x), model->forward(x)));
  EXPECT_TRUE(torch::equal(shared->forward(x), model->forward(x)));
}

TEST(Clone, ReinitializationIsSeeded) {
  auto a = testutil::tiny_cnn(10)->clone(false);
  auto b = a->clone(false);
  reinitialize(a->layer_groups()[0], 42);
  reinitialize(b->layer_groups()[0], 42);
  auto pa = a->parameters(), pb = b->parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
}
