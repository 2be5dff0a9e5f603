#pragma once

#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "iia/models/cnn.hpp"

namespace iia {

enum class Activation { none, relu, tanh, softplus, square };

torch::Tensor apply_activation(Activation activation, const torch::Tensor& x);

struct ConvStageSpec {
  std::int64_t out_channels = 8;
  std::int64_t kernel = 3;
  std::int64_t padding = 1;
  Activation activation = Activation::relu;
  bool max_pool = false;  // 2x2, stride 2
};

struct SmallCnnConfig {
  std::int64_t in_channels = 1;
  std::int64_t height = 28;
  std::int64_t width = 28;
  std::vector<ConvStageSpec> stages;
  // Global average pooling before the dense layers instead of flattening.
  bool global_pool = false;
  std::vector<std::int64_t> hidden;
  Activation hidden_activation = Activation::relu;
  std::int64_t num_classes = 10;
};

// Small configurable CNN: each stage is conv -> activation -> optional max
// pool and is one tapped layer. Modules are named conv1.., fc1...
struct SmallCnnImpl : torch::nn::Cloneable<SmallCnnImpl>, StagedCnn {
  explicit SmallCnnImpl(SmallCnnConfig config);

  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

  int num_stages() const override { return static_cast<int>(config.stages.size()); }
  std::string stage_name(int index) const override { return "conv" + std::to_string(index); }
  torch::Tensor stage(int index, const torch::Tensor& x) override;
  torch::Tensor classify(const torch::Tensor& features) override;
  std::int64_t num_classes() const override { return config.num_classes; }
  std::vector<LayerGroup> layer_groups() override;
  std::shared_ptr<StagedCnn> deep_copy() const override;
  torch::nn::Module& module() override { return *this; }

  SmallCnnConfig config;
  std::vector<torch::nn::Conv2d> convs;
  std::vector<torch::nn::Linear> dense;
};

// Classic LeNet-5 for 1x28x28 inputs: two tapped conv stages and three
// dense layers.
SmallCnnConfig lenet5_config();

// Logits that do not depend on the input. One identity stage.
struct ConstantLogitsImpl : torch::nn::Cloneable<ConstantLogitsImpl>, StagedCnn {
  explicit ConstantLogitsImpl(std::vector<float> logits);

  void reset() override;

  int num_stages() const override { return 1; }
  std::string stage_name(int) const override { return "identity"; }
  torch::Tensor stage(int index, const torch::Tensor& x) override;
  torch::Tensor classify(const torch::Tensor& features) override;
  std::int64_t num_classes() const override { return static_cast<std::int64_t>(values.size()); }
  std::vector<LayerGroup> layer_groups() override { return {}; }
  std::shared_ptr<StagedCnn> deep_copy() const override;
  torch::nn::Module& module() override { return *this; }

  std::vector<float> values;
  torch::Tensor logits;
};

// logits = W flatten(x) + b with one identity stage; the analytic reference
// for gradient and IG checks.
struct LinearProbeImpl : torch::nn::Cloneable<LinearProbeImpl>, StagedCnn {
  LinearProbeImpl(std::vector<std::int64_t> input_shape, std::int64_t num_classes);

  void reset() override;

  int num_stages() const override { return 1; }
  std::string stage_name(int) const override { return "identity"; }
  torch::Tensor stage(int index, const torch::Tensor& x) override;
  torch::Tensor classify(const torch::Tensor& features) override;
  std::int64_t num_classes() const override { return classes; }
  std::vector<LayerGroup> layer_groups() override;
  std::shared_ptr<StagedCnn> deep_copy() const override;
  torch::nn::Module& module() override { return *this; }

  std::vector<std::int64_t> shape;
  std::int64_t classes;
  torch::nn::Linear linear{nullptr};
};

}  // namespace iia
