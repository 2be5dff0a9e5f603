#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "iia/models/instrumented_model.hpp"

namespace iia {

struct VitConfig {
  std::int64_t image_size = 224;
  std::int64_t patch_size = 16;
  std::int64_t in_channels = 3;
  std::int64_t embed_dim = 768;
  std::int64_t depth = 12;
  std::int64_t heads = 12;
  std::int64_t mlp_ratio = 4;
  std::int64_t num_classes = 1000;

  std::int64_t grid() const { return image_size / patch_size; }
  std::int64_t tokens() const { return 1 + grid() * grid(); }
};

VitConfig vit_base_patch16_config();
VitConfig vit_small_patch16_config();

struct PatchEmbedImpl : torch::nn::Cloneable<PatchEmbedImpl> {
  PatchEmbedImpl(std::int64_t in_channels, std::int64_t dim, std::int64_t patch);
  void reset() override;

  std::int64_t in_channels, dim, patch;
  torch::nn::Conv2d proj{nullptr};
};
TORCH_MODULE(PatchEmbed);

struct AttentionImpl : torch::nn::Cloneable<AttentionImpl> {
  AttentionImpl(std::int64_t dim, std::int64_t heads);
  void reset() override;

  std::int64_t dim, heads;
  torch::nn::Linear qkv{nullptr}, proj{nullptr};
};
TORCH_MODULE(Attention);

struct MlpImpl : torch::nn::Cloneable<MlpImpl> {
  MlpImpl(std::int64_t dim, std::int64_t hidden);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t dim, hidden;
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(Mlp);

struct VitBlockImpl : torch::nn::Cloneable<VitBlockImpl> {
  VitBlockImpl(std::int64_t dim, std::int64_t heads, std::int64_t mlp_hidden);
  void reset() override;

  // Post-softmax attention (B,H,T,T) and values (B,H,T,D/H) for tokens x.
  std::pair<torch::Tensor, torch::Tensor> attention(const torch::Tensor& x);
  // Finishes the block from a (possibly substituted) attention matrix.
  torch::Tensor complete(const torch::Tensor& x, const torch::Tensor& attn, const torch::Tensor& values);

  std::int64_t dim, heads, mlp_hidden;
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  Attention attn{nullptr};
  Mlp mlp{nullptr};
};
TORCH_MODULE(VitBlock);

// Vision transformer with timm parameter names (class token pooling, no
// register tokens).
struct VisionTransformerImpl : torch::nn::Cloneable<VisionTransformerImpl> {
  explicit VisionTransformerImpl(VitConfig config);
  void reset() override;

  torch::Tensor embed(const torch::Tensor& images);
  torch::Tensor classify(const torch::Tensor& tokens);
  torch::Tensor forward(const torch::Tensor& images);

  VitConfig config;
  PatchEmbed patch_embed{nullptr};
  torch::Tensor cls_token, pos_embed;
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(VisionTransformer);

struct VitOptions {
  std::string name;
  Normalization normalization = Normalization::half();
  ReferencePolicy input_reference = ReferencePolicy::channel_min();
  ReferencePolicy attention_reference = ReferencePolicy::zero();
};

// Layer 0 is the image; layer j (1..depth) is block j's post-softmax
// attention, shape (B, heads, T, T). Injecting v^j replaces the attention
// that multiplies block j's values.
std::unique_ptr<InstrumentedModel> instrument_vit(VisionTransformer network, VitOptions options);

}  // namespace iia
