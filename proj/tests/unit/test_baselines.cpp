#include <gtest/gtest.h>
#include <torch/torch.h>

#include "helpers.hpp"
#include "iia/baselines.hpp"
#include "iia/core/reduce.hpp"
#include "iia/errors.hpp"

using namespace iia;

namespace {

std::unique_ptr<InstrumentedModel> linear_probe(std::shared_ptr<LinearProbeImpl>* out = nullptr) {
  torch::manual_seed(21);
  auto net = std::make_shared<LinearProbeImpl>(std::vector<std::int64_t>{3, 4, 4}, 3);
  net->to(torch::kDouble);
  if (out) *out = net;
  CnnOptions o;
  o.name = "probe";
  o.input_shape = {3, 4, 4};
  o.normalization = Normalization::identity();
  return instrument_cnn(net, o);
}

// phi(x) = x^2 on a single pixel: 1x1 conv with unit weight, squared, then a
// unit dense layer.
std::unique_ptr<InstrumentedModel> square_model() {
  SmallCnnConfig c;
  c.in_channels = 1;
  c.height = 1;
  c.width = 1;
  c.stages = {{1, 1, 0, Activation::square, false}};
  c.num_classes = 1;
  auto net = std::make_shared<SmallCnnImpl>(c);
  net->to(torch::kDouble);
  {
    torch::NoGradGuard g;
    net->convs[0]->weight.fill_(1.0);
    net->convs[0]->bias.zero_();
    net->dense[0]->weight.fill_(1.0);
    net->dense[0]->bias.zero_();
  }
  CnnOptions o;
  o.name = "square";
  o.input_shape = {1, 1, 1};
  o.normalization = Normalization::identity();
  return instrument_cnn(net, o);
}

}  // namespace

TEST(IntegratedGradients, LinearModelGivesWeightTimesInput) {
  std::shared_ptr<LinearProbeImpl> net;
  auto model = linear_probe(&net);
  auto x = torch::randn({3, 4, 4}, torch::kDouble);
  auto w = net->linear->weight[2].detach().view({3, 4, 4});
  for (int n : {1, 7, 50}) {
    auto t = integrated_gradients_tensor(*model, x, std::nullopt, n, 2);
    EXPECT_TRUE(torch::allclose(t, w * x, 1e-12, 1e-12)) << "n=" << n;
    auto map = integrated_gradients(*model, x, std::nullopt, n, 2);
    auto expected = (w * x).mean(0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) EXPECT_NEAR(map.at(i, j), expected[i][j].item<double>(), 1e-6);
  }
}

TEST(IntegratedGradients, QuadraticClosedForm) {
  auto model = square_model();
  for (double x : {0.3, -1.7, 2.5}) {
    auto t = integrated_gradients_tensor(*model, torch::full({1, 1, 1}, x, torch::kDouble), std::nullopt, 10, 0);
    EXPECT_NEAR(t.item<double>(), 1.1 * x * x, 1e-9);
  }
}

TEST(IntegratedGradients, InputEqualToReferenceGivesZero) {
  auto model = testutil::tiny_cnn(3);
  auto x = torch::rand({2, 8, 8});
  auto map = integrated_gradients(*model, x, x, 10, 0);
  for (float v : map.values) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(completeness_check(*model, x, x, 10, 0), 0.0);
}

TEST(IntegratedGradients, ChunkingDoesNotChangeTheResult) {
  auto model = testutil::tiny_cnn(4);
  auto x = torch::rand({2, 8, 8});
  auto a = integrated_gradients(*model, x, std::nullopt, 30, 1, 100);
  auto b = integrated_gradients(*model, x, std::nullopt, 30, 1, 4);
  EXPECT_LT(testutil::max_abs_diff(a.values, b.values), 1e-6);
}

TEST(Completeness, LinearModelIsExact) {
  auto model = linear_probe();
  auto x = torch::randn({3, 4, 4}, torch::kDouble);
  EXPECT_LT(completeness_check(*model, x, std::nullopt, 3, 1), 1e-10);
}

TEST(Completeness, SmoothCnnConvergesAtThreeHundredSteps) {
  auto model = testutil::three_block_cnn(5, torch::kDouble);
  auto x = torch::rand({3, 16, 16}, torch::kDouble);
  EXPECT_LT(completeness_check(*model, x, std::nullopt, 300, 3), 0.05);
}

TEST(GradCam, ZeroGradientGivesZeroMap) {
  auto net = std::make_shared<ConstantLogitsImpl>(std::vector<float>{0.0f, 1.0f});
  CnnOptions o;
  o.name = "constant";
  o.input_shape = {3, 6, 6};
  auto model = instrument_cnn(net, o);
  auto map = grad_cam(*model, torch::rand({3, 6, 6}), 1);
  for (float v : map.values) EXPECT_EQ(v, 0.0f);
}

// One-channel last stage followed by global pooling and a positive dense
// weight: the gradient is uniform and the map is ReLU(A) up to scale.
TEST(GradCam, UniformGradientIsProportionalToActivation) {
  torch::manual_seed(23);
  SmallCnnConfig c;
  c.in_channels = 1;
  c.height = 6;
  c.width = 6;
  c.stages = {{1, 3, 1, Activation::none, false}};
  c.global_pool = true;
  c.num_classes = 1;
  auto net = std::make_shared<SmallCnnImpl>(c);
  net->to(torch::kDouble);
  {
    torch::NoGradGuard g;
    net->dense[0]->weight.fill_(2.0);
  }
  CnnOptions o;
  o.name = "one_channel";
  o.input_shape = {1, 6, 6};
  o.normalization = Normalization::identity();
  auto model = instrument_cnn(net, o);
  auto x = torch::randn({1, 6, 6}, torch::kDouble);
  auto map = grad_cam(*model, x, 0);
  torch::NoGradGuard g;
  auto a = torch::relu(net->stage(1, x.unsqueeze(0))[0][0]);
  const double g_uniform = 2.0 / 36.0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(map.at(i, j), g_uniform * a[i][j].item<double>(), 1e-6);
}

TEST(GradCam, MatchesStraightLineComputation) {
  torch::manual_seed(24);
  SmallCnnConfig c;
  c.in_channels = 1;
  c.height = 8;
  c.width = 8;
  c.stages = {{2, 3, 1, Activation::tanh, true}};
  c.hidden = {5};
  c.hidden_activation = Activation::tanh;
  c.num_classes = 3;
  auto net = std::make_shared<SmallCnnImpl>(c);
  net->to(torch::kDouble);
  CnnOptions o;
  o.name = "two_channel";
  o.input_shape = {1, 8, 8};
  auto model = instrument_cnn(net, o);
  auto x = torch::randn({1, 8, 8}, torch::kDouble);
  auto map = grad_cam(*model, x, 1);

  auto a = net->stage(1, x.unsqueeze(0)).detach().requires_grad_(true);
  auto score = net->classify(a)[0][1];
  auto grad = torch::autograd::grad({score}, {a})[0][0];
  auto act = a.detach()[0];
  Grid2D cam(4, 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int ch = 0; ch < 2; ++ch) s += grad[ch].mean().item<double>() * act[ch][i][j].item<double>();
      cam.at(i, j) = std::max(s, 0.0);
    }
  }
  auto expected = resize_bilinear(cam, 8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(map.at(i, j), expected.at(i, j), 1e-6);
  for (float v : map.values) EXPECT_GE(v, 0.0f);
}

TEST(GradCam, RejectsTransformers) {
  auto model = testutil::tiny_vit(1);
  EXPECT_THROW(grad_cam(*model, torch::rand({3, 16, 16}), 0), UnsupportedArchitecture);
}

TEST(AttentionRollout, MapIsTheClsRowOfTheRollout) {
  auto model = testutil::tiny_vit(2);
  auto x = torch::rand({3, 16, 16});
  auto attentions = capture_attentions(*model, x);
  ASSERT_EQ(attentions.size(), 2u);
  RolloutState s;
  s.attentions = attentions;
  auto patch = cls_row_to_patch_map(Grid2D::from_tensor(attention_rollout(s)), 4, 4);
  auto expected = resize_bilinear(patch, 16, 16);
  auto map = attention_rollout_map(*model, x, 0);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) EXPECT_NEAR(map.at(i, j), expected.at(i, j), 1e-6);
  EXPECT_THROW(capture_attentions(*testutil::tiny_cnn(1), torch::rand({2, 8, 8})), UnsupportedArchitecture);
}
