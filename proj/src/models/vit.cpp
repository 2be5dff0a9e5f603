#include "iia/models/vit.hpp"

#include <cmath>

#include "iia/errors.hpp"
#include "init.hpp"

namespace iia {
namespace nn = torch::nn;

VitConfig vit_base_patch16_config() { return {}; }

VitConfig vit_small_patch16_config() {
  VitConfig c;
  c.embed_dim = 384;
  c.heads = 6;
  return c;
}

PatchEmbedImpl::PatchEmbedImpl(std::int64_t c, std::int64_t d, std::int64_t p) : in_channels(c), dim(d), patch(p) {
  reset();
}

void PatchEmbedImpl::reset() {
  proj = register_module("proj", nn::Conv2d(nn::Conv2dOptions(in_channels, dim, patch).stride(patch)));
}

AttentionImpl::AttentionImpl(std::int64_t d, std::int64_t h) : dim(d), heads(h) {
  if (dim % heads != 0) throw InvalidArgument("embedding dim must divide by the head count");
  reset();
}

void AttentionImpl::reset() {
  qkv = register_module("qkv", nn::Linear(dim, 3 * dim));
  proj = register_module("proj", nn::Linear(dim, dim));
}

MlpImpl::MlpImpl(std::int64_t d, std::int64_t h) : dim(d), hidden(h) { reset(); }

void MlpImpl::reset() {
  fc1 = register_module("fc1", nn::Linear(dim, hidden));
  fc2 = register_module("fc2", nn::Linear(hidden, dim));
}

torch::Tensor MlpImpl::forward(const torch::Tensor& x) { return fc2(torch::gelu(fc1(x))); }

VitBlockImpl::VitBlockImpl(std::int64_t d, std::int64_t h, std::int64_t m) : dim(d), heads(h), mlp_hidden(m) {
  reset();
}

void VitBlockImpl::reset() {
  norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({dim}).eps(1e-6)));
  attn = register_module("attn", Attention(dim, heads));
  norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({dim}).eps(1e-6)));
  mlp = register_module("mlp", Mlp(dim, mlp_hidden));
}

std::pair<torch::Tensor, torch::Tensor> VitBlockImpl::attention(const torch::Tensor& x) {
  const auto b = x.size(0), t = x.size(1), hd = dim / heads;
  auto qkv = attn->qkv(norm1(x)).reshape({b, t, 3, heads, hd}).permute({2, 0, 3, 1, 4});
  auto q = qkv[0] * (1.0 / std::sqrt(static_cast<double>(hd)));
  auto k = qkv[1];
  auto scores = torch::matmul(q, k.transpose(-2, -1));
  return {torch::softmax(scores, -1), qkv[2]};
}

torch::Tensor VitBlockImpl::complete(const torch::Tensor& x, const torch::Tensor& a, const torch::Tensor& values) {
  const auto b = x.size(0), t = x.size(1);
  auto mixed = torch::matmul(a, values).transpose(1, 2).reshape({b, t, dim});
  auto h = x + attn->proj(mixed);
  return h + mlp(norm2(h));
}

VisionTransformerImpl::VisionTransformerImpl(VitConfig c) : config(c) {
  if (config.image_size % config.patch_size != 0) throw InvalidArgument("image size must be a multiple of the patch");
  reset();
}

void VisionTransformerImpl::reset() {
  const auto d = config.embed_dim;
  patch_embed = register_module("patch_embed", PatchEmbed(config.in_channels, d, config.patch_size));
  cls_token = register_parameter("cls_token", torch::zeros({1, 1, d}));
  pos_embed = register_parameter("pos_embed", torch::zeros({1, config.tokens(), d}));
  blocks = register_module("blocks", nn::ModuleList());
  for (std::int64_t i = 0; i < config.depth; ++i) blocks->push_back(VitBlock(d, config.heads, d * config.mlp_ratio));
  norm = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({d}).eps(1e-6)));
  head = register_module("head", nn::Linear(d, config.num_classes));

  torch::NoGradGuard no_grad;
  detail::trunc_normal_(pos_embed, 0.0, 0.02);
  cls_token.normal_(0.0, 1e-6);
  for (auto& m : modules(/*include_self=*/false)) {
    if (auto* linear = m->as<nn::Linear>()) {
      detail::trunc_normal_(linear->weight, 0.0, 0.02);
      nn::init::zeros_(linear->bias);
    }
  }
}

torch::Tensor VisionTransformerImpl::embed(const torch::Tensor& images) {
  auto x = patch_embed->proj(images).flatten(2).transpose(1, 2);
  auto cls = cls_token.expand({x.size(0), 1, config.embed_dim});
  return torch::cat({cls, x}, 1) + pos_embed;
}

torch::Tensor VisionTransformerImpl::classify(const torch::Tensor& tokens) {
  return head(norm(tokens).select(1, 0));
}

torch::Tensor VisionTransformerImpl::forward(const torch::Tensor& images) {
  auto x = embed(images);
  for (std::size_t i = 0; i < blocks->size(); ++i) {
    auto block = blocks->ptr<VitBlockImpl>(i);
    auto [a, values] = block->attention(x);
    x = block->complete(x, a, values);
  }
  return classify(x);
}

namespace {

class InstrumentedVit final : public InstrumentedModel {
 public:
  InstrumentedVit(VisionTransformer network, VitOptions options)
      : network_(std::move(network)), options_(std::move(options)) {}

  const std::string& name() const override { return options_.name; }
  Architecture architecture() const override { return Architecture::vit; }
  int depth() const override { return static_cast<int>(network_->config.depth); }
  std::vector<std::int64_t> input_shape() const override {
    const auto& c = network_->config;
    return {c.in_channels, c.image_size, c.image_size};
  }
  std::int64_t num_classes() const override { return network_->config.num_classes; }

  // carry = {block input tokens, values} for attention layers.
  LayerState advance(const LayerState& state, const torch::Tensor& v) const override {
    if (state.layer >= depth()) throw StateError("advance past the last block; use head()");
    torch::Tensor x = state.layer == 0 ? network_->embed(v) : finish_block(state, v);
    auto next = block(state.layer);
    auto [a, values] = next->attention(x);
    return LayerState{state.layer + 1, a, {x, values}};
  }

  torch::Tensor head(const LayerState& state, const torch::Tensor& v) const override {
    if (state.layer != depth()) throw StateError("head() needs the state of the last block");
    return network_->classify(finish_block(state, v));
  }

  ReferencePolicy default_reference(int layer) const override {
    return layer == 0 ? options_.input_reference : options_.attention_reference;
  }
  std::optional<TokenGrid> token_grid() const override {
    return TokenGrid{network_->config.grid(), network_->config.grid()};
  }
  Normalization normalization() const override { return options_.normalization; }

  std::vector<LayerGroup> layer_groups() const override {
    std::vector<LayerGroup> groups;
    auto& n = *network_;
    groups.push_back({"embed", {n.patch_embed.ptr()}, {n.cls_token, n.pos_embed}, {}});
    for (std::size_t i = 0; i < n.blocks->size(); ++i) {
      groups.push_back({"blocks." + std::to_string(i), {n.blocks->ptr(i)}, {}, [](torch::nn::Module& m) {
                          for (auto& sub : m.modules(/*include_self=*/true)) {
                            if (auto* linear = sub->as<nn::Linear>()) {
                              detail::trunc_normal_(linear->weight, 0.0, 0.02);
                              nn::init::zeros_(linear->bias);
                            } else if (auto* ln = sub->as<nn::LayerNorm>()) {
                              ln->reset_parameters();
                            }
                          }
                        }});
    }
    groups.push_back({"norm", {n.norm.ptr()}, {}, {}});
    groups.push_back({"head", {n.head.ptr()}, {}, [](torch::nn::Module& m) {
                        auto* linear = m.as<nn::Linear>();
                        detail::trunc_normal_(linear->weight, 0.0, 0.02);
                        nn::init::zeros_(linear->bias);
                      }});
    return groups;
  }

  std::vector<torch::Tensor> parameters() const override { return network_->parameters(); }
  void set_training(bool training) override { network_->train(training); }

  std::unique_ptr<InstrumentedModel> clone(bool share_weights) const override {
    VisionTransformer network =
        share_weights ? network_ : VisionTransformer(std::dynamic_pointer_cast<VisionTransformerImpl>(network_->clone()));
    return std::make_unique<InstrumentedVit>(std::move(network), options_);
  }

 private:
  std::shared_ptr<VitBlockImpl> block(int index) const { return network_->blocks->ptr<VitBlockImpl>(index); }

  torch::Tensor finish_block(const LayerState& state, const torch::Tensor& v) const {
    if (state.carry.size() != 2) throw StateError("attention layer state is missing its tokens and values");
    return block(state.layer - 1)->complete(state.carry[0], v, state.carry[1]);
  }

  mutable VisionTransformer network_;
  VitOptions options_;
};

}  // namespace

std::unique_ptr<InstrumentedModel> instrument_vit(VisionTransformer network, VitOptions options) {
  if (!network) throw InstrumentationError("instrument_vit: no network");
  if (network->blocks->size() == 0) throw InstrumentationError(options.name + ": transformer has no blocks to tap");
  torch::NoGradGuard no_grad;
  const auto& c = network->config;
  auto x = network->embed(
      torch::zeros({1, c.in_channels, c.image_size, c.image_size}, torch::dtype(network->cls_token.dtype())));
  for (std::size_t i = 0; i < network->blocks->size(); ++i) {
    auto block = network->blocks->ptr<VitBlockImpl>(i);
    try {
      auto [a, values] = block->attention(x);
      if (a.dim() != 4 || a.size(2) != c.tokens() || a.size(3) != c.tokens()) {
        throw InstrumentationError("attention is not (B,H,T,T)");
      }
      x = block->complete(x, a, values);
    } catch (const std::exception& e) {
      throw InstrumentationError(options.name + ": block " + std::to_string(i) +
                                 " does not expose multi-head attention: " + e.what());
    }
  }
  auto model = std::make_unique<InstrumentedVit>(std::move(network), std::move(options));
  freeze(*model);
  return model;
}

}  // namespace iia
