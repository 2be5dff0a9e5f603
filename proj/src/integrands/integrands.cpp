#include "iia/integrands.hpp"

#include "iia/errors.hpp"

namespace iia {
namespace {

void check_same_shape(const torch::Tensor& v, const torch::Tensor& g, const char* what) {
  if (v.sizes() != g.sizes()) throw InvalidArgument(std::string(what) + ": representation and gradient shapes differ");
}

// Checks block shapes and returns the token count.
std::int64_t check_stack(const RolloutState& state, bool use_gradients) {
  if (state.attentions.empty()) throw InvalidArgument("rollout needs at least one block");
  if (use_gradients && state.gradients.size() != state.attentions.size()) {
    throw InvalidArgument("rollout: one gradient stack per attention stack expected");
  }
  const auto& first = state.attentions.front();
  if (first.dim() != 3 && first.dim() != 4) throw InvalidArgument("rollout: attention must be (H,T,T) or (B,H,T,T)");
  const std::int64_t tokens = first.size(-1);
  for (std::size_t b = 0; b < state.attentions.size(); ++b) {
    const auto& a = state.attentions[b];
    if (a.dim() != first.dim() || a.size(-1) != tokens || a.size(-2) != tokens) {
      throw InvalidArgument("rollout: inconsistent token counts across blocks");
    }
    if (use_gradients && state.gradients[b].sizes() != a.sizes()) {
      throw InvalidArgument("rollout: attention and gradient shapes differ in block " + std::to_string(b));
    }
  }
  return tokens;
}

torch::Tensor combine_blocks(const std::vector<torch::Tensor>& blocks, RolloutCombine combine) {
  torch::Tensor out = blocks.front();
  for (std::size_t b = 1; b < blocks.size(); ++b) {
    out = combine == RolloutCombine::product ? torch::matmul(out, blocks[b]) : out + blocks[b];
  }
  return out;
}

torch::Tensor rollout(const RolloutState& state, RolloutCombine combine, bool use_gradients) {
  const auto tokens = check_stack(state, use_gradients);
  auto eye = torch::eye(tokens, torch::TensorOptions().dtype(torch::kDouble));
  std::vector<torch::Tensor> blocks;
  blocks.reserve(state.attentions.size());
  for (std::size_t b = 0; b < state.attentions.size(); ++b) {
    auto a = state.attentions[b].detach().to(torch::kCPU, torch::kDouble);
    if (use_gradients) a = a * state.gradients[b].detach().to(torch::kCPU, torch::kDouble);
    blocks.push_back(eye + a.mean(/*dim=*/-3));
  }
  return combine_blocks(blocks, combine);
}

}  // namespace

std::string Integrand::name() const {
  switch (kind) {
    case IntegrandKind::plain_gradient: return "plain_gradient";
    case IntegrandKind::activation_gradient_product: return "activation_gradient_product";
    case IntegrandKind::gradient_rollout:
      return rollout_combine == RolloutCombine::product ? "gradient_rollout" : "gradient_rollout_sum";
    case IntegrandKind::attention_rollout:
      return rollout_combine == RolloutCombine::product ? "attention_rollout" : "attention_rollout_sum";
  }
  return "unknown";
}

torch::Tensor plain_gradient(const torch::Tensor& v, const torch::Tensor& grad_v) {
  check_same_shape(v, grad_v, "plain_gradient");
  return grad_v;
}

torch::Tensor activation_gradient_product(const torch::Tensor& v, const torch::Tensor& grad_v) {
  check_same_shape(v, grad_v, "activation_gradient_product");
  return v * grad_v;
}

torch::Tensor gradient_rollout(const RolloutState& state, RolloutCombine combine) {
  return rollout(state, combine, /*use_gradients=*/true);
}

torch::Tensor attention_rollout(const RolloutState& state, RolloutCombine combine) {
  return rollout(state, combine, /*use_gradients=*/false);
}

Grid2D cls_row_to_patch_map(const Grid2D& rollout, std::int64_t grid_h, std::int64_t grid_w) {
  if (rollout.rows != rollout.cols) throw InvalidArgument("cls_row_to_patch_map: rollout must be square");
  if (rollout.rows != 1 + grid_h * grid_w) {
    throw InvalidArgument("cls_row_to_patch_map: " + std::to_string(rollout.rows) + " tokens do not match a " +
                          std::to_string(grid_h) + "x" + std::to_string(grid_w) + " patch grid plus [CLS]");
  }
  Grid2D out(grid_h, grid_w);
  for (std::int64_t i = 0; i < grid_h * grid_w; ++i) out.values[static_cast<std::size_t>(i)] = rollout.at(0, i + 1);
  return out;
}

}  // namespace iia
