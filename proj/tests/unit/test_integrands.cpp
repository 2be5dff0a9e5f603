#include <gtest/gtest.h>
#include <torch/torch.h>

#include "helpers.hpp"
#include "iia/errors.hpp"
#include "iia/integrands.hpp"
#include "iia/models/instrumented_model.hpp"

using namespace iia;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix identity(int t) {
  Matrix m(t, std::vector<double>(t, 0.0));
  for (int i = 0; i < t; ++i) m[i][i] = 1.0;
  return m;
}

// Row-stochastic random attention (H,T,T) in double.
torch::Tensor random_attention(int heads, int tokens) {
  return torch::softmax(torch::randn({heads, tokens, tokens}, torch::kDouble) * 2.0, -1);
}

// Straight-line evaluation: A'_b = I + (1/H) sum_h A o G, combined by loops.
Matrix oracle(const RolloutState& s, bool use_gradients, bool product) {
  const int blocks = static_cast<int>(s.attentions.size());
  const int heads = static_cast<int>(s.attentions[0].size(0));
  const int t = static_cast<int>(s.attentions[0].size(1));
  Matrix result;
  for (int b = 0; b < blocks; ++b) {
    auto a = s.attentions[b].accessor<double, 3>();
    Matrix block = identity(t);
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < t; ++j) {
        double acc = 0.0;
        for (int h = 0; h < heads; ++h) {
          const double g = use_gradients ? s.gradients[b].accessor<double, 3>()[h][i][j] : 1.0;
          acc += a[h][i][j] * g;
        }
        block[i][j] += acc / heads;
      }
    }
    if (b == 0) {
      result = block;
    } else if (product) {
      Matrix next(t, std::vector<double>(t, 0.0));
      for (int i = 0; i < t; ++i)
        for (int k = 0; k < t; ++k)
          for (int j = 0; j < t; ++j) next[i][j] += result[i][k] * block[k][j];
      result = next;
    } else {
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j) result[i][j] += block[i][j];
    }
  }
  return result;
}

void expect_matches(const torch::Tensor& got, const Matrix& want, double tol) {
  auto g = got.accessor<double, 2>();
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t j = 0; j < want.size(); ++j) EXPECT_NEAR(g[i][j], want[i][j], tol);
}

}  // namespace

TEST(Integrands, PlainGradientIsIdentity) {
  auto v = torch::randn({2, 3});
  auto g = torch::randn({2, 3});
  EXPECT_TRUE(torch::equal(plain_gradient(v, g), g));
  EXPECT_TRUE(torch::equal(plain_gradient(v, torch::zeros({2, 3})), torch::zeros({2, 3})));
  EXPECT_THROW(plain_gradient(v, torch::zeros({3, 2})), InvalidArgument);
}

TEST(Integrands, ActivationGradientProduct) {
  auto out = activation_gradient_product(torch::tensor({1.0, 2.0}), torch::tensor({3.0, -1.0}));
  EXPECT_TRUE(torch::equal(out, torch::tensor({3.0, -2.0})));
  auto g = torch::randn({4});
  EXPECT_TRUE(torch::equal(activation_gradient_product(torch::ones({4}), g), g));
  EXPECT_TRUE(torch::equal(activation_gradient_product(torch::zeros({4}), g), torch::zeros({4})));
}

// Linear head f = <w, v>: the gradient equals w, confirmed by central
// differences with step 1e-4.
TEST(Integrands, PlainGradientOfLinearHeadMatchesFiniteDifferences) {
  torch::manual_seed(3);
  auto net = std::make_shared<LinearProbeImpl>(std::vector<std::int64_t>{1, 3, 3}, 2);
  net->to(torch::kDouble);
  CnnOptions o;
  o.name = "probe";
  o.input_shape = {1, 3, 3};
  o.normalization = Normalization::identity();
  auto model = instrument_cnn(net, o);
  auto x = torch::randn({1, 1, 3, 3}, torch::kDouble);
  TapSession session(*model);
  session.forward_with_injections(x, {}, 1);
  auto grad = plain_gradient(session.tap(1).v, session.backward_to_injection(1, 1));
  const double h = 1e-4;
  auto flat = x.flatten();
  for (int i = 0; i < 9; ++i) {
    auto plus = flat.clone(), minus = flat.clone();
    plus[i] += h;
    minus[i] -= h;
    torch::NoGradGuard g;
    const double fd = (model->forward(plus.view({1, 1, 3, 3}))[0][1].item<double>() -
                       model->forward(minus.view({1, 1, 3, 3}))[0][1].item<double>()) /
                      (2 * h);
    EXPECT_NEAR(grad.flatten()[i].item<double>(), fd, 1e-8);
    EXPECT_NEAR(fd, net->linear->weight[1][i].item<double>(), 1e-8);
  }
}

TEST(Integrands, UnitGradientsReduceToAttentionRollout) {
  torch::manual_seed(5);
  RolloutState s;
  for (int b = 0; b < 3; ++b) {
    s.attentions.push_back(random_attention(3, 5));
    s.gradients.push_back(torch::ones({3, 5, 5}, torch::kDouble));
  }
  for (auto combine : {RolloutCombine::product, RolloutCombine::sum}) {
    EXPECT_TRUE(torch::equal(gradient_rollout(s, combine), attention_rollout(s, combine)));
  }
}

TEST(Integrands, SingleBlockSingleHeadIsIPlusA) {
  RolloutState s;
  auto a = random_attention(1, 4);
  s.attentions = {a};
  s.gradients = {torch::ones_like(a)};
  EXPECT_TRUE(torch::allclose(gradient_rollout(s), torch::eye(4, torch::kDouble) + a[0], 0, 1e-15));
  RolloutState id;
  id.attentions = {torch::eye(4, torch::kDouble).unsqueeze(0)};
  EXPECT_TRUE(torch::equal(attention_rollout(id), 2 * torch::eye(4, torch::kDouble)));
}

TEST(Integrands, ZeroAttentionGivesIdentity) {
  RolloutState s;
  s.attentions = {torch::zeros({2, 4, 4}, torch::kDouble), torch::zeros({2, 4, 4}, torch::kDouble)};
  s.gradients = {torch::randn({2, 4, 4}, torch::kDouble), torch::randn({2, 4, 4}, torch::kDouble)};
  EXPECT_TRUE(torch::equal(gradient_rollout(s), torch::eye(4, torch::kDouble)));
}

TEST(Integrands, GradientRolloutMatchesStraightLineOracle) {
  torch::manual_seed(7);
  RolloutState s;
  for (int b = 0; b < 2; ++b) {
    s.attentions.push_back(random_attention(2, 4));
    s.gradients.push_back(torch::randn({2, 4, 4}, torch::kDouble));
  }
  expect_matches(gradient_rollout(s), oracle(s, true, true), 1e-13);
  expect_matches(gradient_rollout(s, RolloutCombine::sum), oracle(s, true, false), 1e-13);
}

TEST(Integrands, AttentionRolloutMatchesStraightLineOracle) {
  torch::manual_seed(8);
  RolloutState s;
  for (int b = 0; b < 3; ++b) s.attentions.push_back(random_attention(3, 5));
  expect_matches(attention_rollout(s), oracle(s, false, true), 1e-13);
}

TEST(Integrands, BlockOrderMattersOnlyForProduct) {
  torch::manual_seed(9);
  RolloutState s, swapped;
  for (int b = 0; b < 2; ++b) {
    s.attentions.push_back(random_attention(2, 5));
    s.gradients.push_back(torch::randn({2, 5, 5}, torch::kDouble));
  }
  swapped.attentions = {s.attentions[1], s.attentions[0]};
  swapped.gradients = {s.gradients[1], s.gradients[0]};
  EXPECT_FALSE(torch::allclose(gradient_rollout(s), gradient_rollout(swapped)));
  EXPECT_TRUE(torch::allclose(gradient_rollout(s, RolloutCombine::sum), gradient_rollout(swapped, RolloutCombine::sum), 0,
                              1e-14));
}

TEST(Integrands, DuplicatingAHeadKeepsTheMean) {
  torch::manual_seed(10);
  RolloutState s, dup;
  auto a = random_attention(1, 4);
  auto g = torch::randn({1, 4, 4}, torch::kDouble);
  s.attentions = {a};
  s.gradients = {g};
  dup.attentions = {torch::cat({a, a})};
  dup.gradients = {torch::cat({g, g})};
  EXPECT_TRUE(torch::allclose(gradient_rollout(s), gradient_rollout(dup), 0, 1e-15));
}

TEST(Integrands, RejectsInconsistentTokenCounts) {
  RolloutState s;
  s.attentions = {random_attention(1, 4), random_attention(1, 5)};
  s.gradients = {torch::ones({1, 4, 4}, torch::kDouble), torch::ones({1, 5, 5}, torch::kDouble)};
  EXPECT_THROW(gradient_rollout(s), InvalidArgument);
  EXPECT_THROW(gradient_rollout(RolloutState{}), InvalidArgument);
}

TEST(Integrands, ClsRowToPatchMap) {
  Grid2D r(5, 5);
  for (std::int64_t i = 0; i < 25; ++i) r.values[static_cast<std::size_t>(i)] = static_cast<double>(i);
  auto m = cls_row_to_patch_map(r, 2, 2);
  EXPECT_EQ(m.values, (std::vector<double>{1, 2, 3, 4}));
  Grid2D eye(5, 5);
  for (int i = 0; i < 5; ++i) eye.at(i, i) = 1.0;
  for (double v : cls_row_to_patch_map(eye, 2, 2).values) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(cls_row_to_patch_map(r, 2, 3), InvalidArgument);

  torch::manual_seed(12);
  auto t = torch::randn({10, 10}, torch::kDouble);
  auto got = cls_row_to_patch_map(Grid2D::from_tensor(t), 3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(got.at(i, j), t[0][1 + i * 3 + j].item<double>());
}
