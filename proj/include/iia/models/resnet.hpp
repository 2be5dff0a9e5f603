#pragma once

#include <array>
#include <memory>

#include <torch/torch.h>

#include "iia/models/cnn.hpp"

namespace iia {

struct BottleneckImpl : torch::nn::Cloneable<BottleneckImpl> {
  BottleneckImpl(std::int64_t inplanes, std::int64_t planes, std::int64_t stride);

  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t inplanes;
  std::int64_t planes;
  std::int64_t stride;
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

// Bottleneck ResNet with torchvision parameter names. Stage 1 is the stem
// plus layer1; stages 2-4 are layer2-layer4.
struct ResNetImpl : torch::nn::Cloneable<ResNetImpl>, StagedCnn {
  ResNetImpl(std::array<int, 4> blocks, std::int64_t num_classes);

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

  std::array<int, 4> blocks;
  std::int64_t classes;
  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  std::array<torch::nn::Sequential, 4> layers{nullptr, nullptr, nullptr, nullptr};
  torch::nn::Linear fc{nullptr};
};

std::shared_ptr<ResNetImpl> make_resnet101(std::int64_t num_classes = 1000);

}  // namespace iia
