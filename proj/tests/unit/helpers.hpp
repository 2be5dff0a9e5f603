#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "iia/models/cnn.hpp"
#include "iia/models/small_cnn.hpp"
#include "iia/models/vit.hpp"

namespace testutil {

// conv(2->4, softplus) -> conv(4->4, tanh, pool) -> dense; 195 parameters.
inline std::shared_ptr<iia::SmallCnnImpl> tiny_cnn_network(std::uint64_t seed, torch::Dtype dtype = torch::kFloat32) {
  torch::manual_seed(seed);
  iia::SmallCnnConfig c;
  c.in_channels = 2;
  c.height = 8;
  c.width = 8;
  c.stages = {{4, 3, 1, iia::Activation::softplus, false}, {4, 3, 1, iia::Activation::tanh, true}};
  c.num_classes = 3;
  auto net = std::make_shared<iia::SmallCnnImpl>(c);
  net->to(dtype);
  return net;
}

inline std::unique_ptr<iia::InstrumentedModel> tiny_cnn(std::uint64_t seed, torch::Dtype dtype = torch::kFloat32,
                                                        iia::ReferencePolicy reference = iia::ReferencePolicy::channel_min()) {
  iia::CnnOptions o;
  o.name = "tiny_cnn";
  o.input_shape = {2, 8, 8};
  o.normalization = iia::Normalization::identity();
  o.reference = reference;
  return iia::instrument_cnn(tiny_cnn_network(seed, dtype), o);
}

// Three conv stages with smooth activations on 3x16x16 inputs.
inline std::unique_ptr<iia::InstrumentedModel> three_block_cnn(std::uint64_t seed, torch::Dtype dtype = torch::kFloat32) {
  torch::manual_seed(seed);
  iia::SmallCnnConfig c;
  c.in_channels = 3;
  c.height = 16;
  c.width = 16;
  c.stages = {{6, 3, 1, iia::Activation::softplus, false},
              {8, 3, 1, iia::Activation::softplus, true},
              {8, 3, 1, iia::Activation::tanh, false}};
  c.global_pool = true;
  c.num_classes = 5;
  auto net = std::make_shared<iia::SmallCnnImpl>(c);
  net->to(dtype);
  iia::CnnOptions o;
  o.name = "three_block_cnn";
  o.input_shape = {3, 16, 16};
  o.normalization = iia::Normalization::identity();
  return iia::instrument_cnn(net, o);
}

// img 16, patch 4, dim 16, 2 heads, 2 blocks.
inline iia::VisionTransformer tiny_vit_network(std::uint64_t seed, torch::Dtype dtype = torch::kFloat32) {
  torch::manual_seed(seed);
  iia::VitConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.in_channels = 3;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.num_classes = 4;
  iia::VisionTransformer net(c);
  // Non-trivial attention and embeddings.
  torch::NoGradGuard g;
  net->cls_token.normal_(0.0, 0.5);
  net->pos_embed.normal_(0.0, 0.5);
  for (auto& p : net->parameters()) {
    if (p.dim() >= 2) p.mul_(3.0);
  }
  net->to(dtype);
  return net;
}

inline std::unique_ptr<iia::InstrumentedModel> tiny_vit(std::uint64_t seed, torch::Dtype dtype = torch::kFloat32) {
  iia::VitOptions o;
  o.name = "tiny_vit";
  return iia::instrument_vit(tiny_vit_network(seed, dtype), o);
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("iia_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
