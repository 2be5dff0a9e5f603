#pragma once

#include <array>
#include <memory>

#include <torch/torch.h>

#include "iia/models/cnn.hpp"

namespace iia {

struct DenseLayerImpl : torch::nn::Cloneable<DenseLayerImpl> {
  DenseLayerImpl(std::int64_t in_features, std::int64_t growth, std::int64_t bn_size);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t in_features, growth, bn_size;
  torch::nn::BatchNorm2d norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(DenseLayer);

struct DenseBlockImpl : torch::nn::Cloneable<DenseBlockImpl> {
  DenseBlockImpl(int num_layers, std::int64_t in_features, std::int64_t growth, std::int64_t bn_size);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

  int num_layers;
  std::int64_t in_features, growth, bn_size;
  std::vector<DenseLayer> dense_layers;
};
TORCH_MODULE(DenseBlock);

struct TransitionImpl : torch::nn::Cloneable<TransitionImpl> {
  TransitionImpl(std::int64_t in_features, std::int64_t out_features);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t in_features, out_features;
  torch::nn::BatchNorm2d norm{nullptr};
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(Transition);

// DenseNet with torchvision parameter names (features.denseblockN...). Stage
// l ends after transition l; stage 4 ends with norm5 + ReLU.
struct DenseNetImpl : torch::nn::Cloneable<DenseNetImpl>, StagedCnn {
  DenseNetImpl(std::array<int, 4> block_config, std::int64_t growth, std::int64_t init_features,
               std::int64_t num_classes);

  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

  int num_stages() const override { return 4; }
  std::string stage_name(int index) const override;
  torch::Tensor stage(int index, const torch::Tensor& x) override;
  torch::Tensor classify(const torch::Tensor& features) override;
  std::int64_t num_classes() const override { return classes; }
  std::vector<LayerGroup> layer_groups() override;
  std::shared_ptr<StagedCnn> deep_copy() const override;
  torch::nn::Module& module() override { return *this; }

  std::array<int, 4> block_config;
  std::int64_t growth, init_features, classes;
  torch::nn::ModuleDict features{nullptr};
  torch::nn::Linear classifier{nullptr};
};

std::shared_ptr<DenseNetImpl> make_densenet201(std::int64_t num_classes = 1000);

}  // namespace iia
