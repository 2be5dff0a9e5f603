#pragma once

#include <array>
#include <memory>

#include <torch/torch.h>

#include "iia/models/cnn.hpp"

namespace iia {

// LayerNorm over the channel axis of an NCHW tensor.
struct LayerNorm2dImpl : torch::nn::Cloneable<LayerNorm2dImpl> {
  LayerNorm2dImpl(std::int64_t channels, double eps = 1e-6);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t channels;
  double eps;
  torch::Tensor weight, bias;
};
TORCH_MODULE(LayerNorm2d);

struct CNBlockImpl : torch::nn::Cloneable<CNBlockImpl> {
  explicit CNBlockImpl(std::int64_t dim, double layer_scale = 1e-6);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t dim;
  double layer_scale_init;
  torch::nn::Sequential block{nullptr};
  torch::Tensor layer_scale;
};
TORCH_MODULE(CNBlock);

// ConvNeXt with torchvision parameter names. Stage l is the downsampling
// layer (stem for l = 1) followed by the l-th block stage.
struct ConvNextImpl : torch::nn::Cloneable<ConvNextImpl>, StagedCnn {
  ConvNextImpl(std::array<int, 4> depths, std::array<std::int64_t, 4> dims, std::int64_t num_classes);

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

  std::array<int, 4> depths;
  std::array<std::int64_t, 4> dims;
  std::int64_t classes;
  torch::nn::ModuleList features{nullptr};
  torch::nn::Sequential classifier{nullptr};
};

std::shared_ptr<ConvNextImpl> make_convnext_base(std::int64_t num_classes = 1000);

}  // namespace iia
