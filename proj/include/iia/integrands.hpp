#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "iia/core/attribution_map.hpp"

namespace iia {

enum class IntegrandKind { plain_gradient, activation_gradient_product, gradient_rollout, attention_rollout };
enum class RolloutCombine { product, sum };

struct Integrand {
  IntegrandKind kind = IntegrandKind::plain_gradient;
  RolloutCombine rollout_combine = RolloutCombine::product;

  static Integrand plain() { return {IntegrandKind::plain_gradient}; }
  static Integrand activation_gradient() { return {IntegrandKind::activation_gradient_product}; }
  static Integrand rollout(RolloutCombine combine = RolloutCombine::product) {
    return {IntegrandKind::gradient_rollout, combine};
  }

  bool is_rollout() const {
    return kind == IntegrandKind::gradient_rollout || kind == IntegrandKind::attention_rollout;
  }
  std::string name() const;
};

// q = grad
torch::Tensor plain_gradient(const torch::Tensor& v, const torch::Tensor& grad_v);

// q = v o grad
torch::Tensor activation_gradient_product(const torch::Tensor& v, const torch::Tensor& grad_v);

// Attention and gradient stacks, one entry per transformer block in forward
// order. Each tensor is (heads, T, T), or (batch, heads, T, T) for a batch of
// independent instances.
struct RolloutState {
  std::vector<torch::Tensor> attentions;
  std::vector<torch::Tensor> gradients;
};

// A'_b = I + mean_h(A_b o G_b); result A'_1 A'_2 ... A'_B (or the sum of the
// A'_b). Computed in double precision; output is (T,T) or (batch,T,T).
torch::Tensor gradient_rollout(const RolloutState& state, RolloutCombine combine = RolloutCombine::product);

// Same with every gradient taken as one; gradients in `state` are ignored.
torch::Tensor attention_rollout(const RolloutState& state, RolloutCombine combine = RolloutCombine::product);

// Row of the [CLS] token (index 0) without its own column, reshaped
// row-major to grid_h x grid_w.
Grid2D cls_row_to_patch_map(const Grid2D& rollout, std::int64_t grid_h, std::int64_t grid_w);

}  // namespace iia
