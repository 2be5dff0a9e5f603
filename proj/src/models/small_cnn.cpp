#include "iia/models/small_cnn.hpp"

#include "iia/errors.hpp"

namespace iia {
namespace nn = torch::nn;

torch::Tensor apply_activation(Activation activation, const torch::Tensor& x) {
  switch (activation) {
    case Activation::none:
      return x;
    case Activation::relu:
      return torch::relu(x);
    case Activation::tanh:
      return torch::tanh(x);
    case Activation::softplus:
      return torch::softplus(x);
    case Activation::square:
      return x * x;
  }
  return x;
}

SmallCnnImpl::SmallCnnImpl(SmallCnnConfig c) : config(std::move(c)) {
  if (config.stages.empty()) throw InvalidArgument("SmallCnn needs at least one stage");
  reset();
}

void SmallCnnImpl::reset() {
  convs.clear();
  dense.clear();
  std::int64_t channels = config.in_channels, h = config.height, w = config.width;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const auto& s = config.stages[i];
    convs.push_back(register_module("conv" + std::to_string(i + 1),
                                    nn::Conv2d(nn::Conv2dOptions(channels, s.out_channels, s.kernel).padding(s.padding))));
    channels = s.out_channels;
    h = h + 2 * s.padding - s.kernel + 1;
    w = w + 2 * s.padding - s.kernel + 1;
    if (s.max_pool) {
      h /= 2;
      w /= 2;
    }
    if (h < 1 || w < 1) throw InvalidArgument("SmallCnn stage " + std::to_string(i + 1) + " collapses the input");
  }
  std::int64_t features = config.global_pool ? channels : channels * h * w;
  std::vector<std::int64_t> widths = config.hidden;
  widths.push_back(config.num_classes);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    dense.push_back(register_module("fc" + std::to_string(i + 1), nn::Linear(features, widths[i])));
    features = widths[i];
  }
}

torch::Tensor SmallCnnImpl::stage(int index, const torch::Tensor& x) {
  if (index < 1 || index > num_stages()) throw InvalidArgument("SmallCnn stage index out of range");
  const auto& s = config.stages[static_cast<std::size_t>(index - 1)];
  auto h = apply_activation(s.activation, convs[static_cast<std::size_t>(index - 1)]->forward(x));
  if (s.max_pool) h = torch::max_pool2d(h, 2, 2);
  return h;
}

torch::Tensor SmallCnnImpl::classify(const torch::Tensor& features) {
  auto h = config.global_pool ? features.mean({2, 3}) : features.flatten(1);
  for (std::size_t i = 0; i < dense.size(); ++i) {
    h = dense[i]->forward(h);
    if (i + 1 < dense.size()) h = apply_activation(config.hidden_activation, h);
  }
  return h;
}

torch::Tensor SmallCnnImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (int s = 1; s <= num_stages(); ++s) h = stage(s, h);
  return classify(h);
}

std::vector<LayerGroup> SmallCnnImpl::layer_groups() {
  std::vector<LayerGroup> groups;
  for (std::size_t i = 0; i < convs.size(); ++i) groups.push_back({"conv" + std::to_string(i + 1), {convs[i].ptr()}, {}, {}});
  for (std::size_t i = 0; i < dense.size(); ++i) groups.push_back({"fc" + std::to_string(i + 1), {dense[i].ptr()}, {}, {}});
  return groups;
}

std::shared_ptr<StagedCnn> SmallCnnImpl::deep_copy() const {
  return std::dynamic_pointer_cast<SmallCnnImpl>(clone());
}

SmallCnnConfig lenet5_config() {
  SmallCnnConfig c;
  c.in_channels = 1;
  c.height = 28;
  c.width = 28;
  c.stages = {{6, 5, 2, Activation::relu, true}, {16, 5, 0, Activation::relu, true}};
  c.hidden = {120, 84};
  c.num_classes = 10;
  return c;
}

ConstantLogitsImpl::ConstantLogitsImpl(std::vector<float> v) : values(std::move(v)) {
  if (values.empty()) throw InvalidArgument("constant model needs at least one logit");
  reset();
}

void ConstantLogitsImpl::reset() {
  logits = register_buffer("logits", torch::tensor(values));
}

torch::Tensor ConstantLogitsImpl::stage(int index, const torch::Tensor& x) {
  if (index != 1) throw InvalidArgument("constant model has a single stage");
  return x;
}

torch::Tensor ConstantLogitsImpl::classify(const torch::Tensor& features) {
  return logits.to(features.dtype()).unsqueeze(0).expand({features.size(0), logits.size(0)}).clone();
}

std::shared_ptr<StagedCnn> ConstantLogitsImpl::deep_copy() const {
  return std::dynamic_pointer_cast<ConstantLogitsImpl>(clone());
}

LinearProbeImpl::LinearProbeImpl(std::vector<std::int64_t> input_shape, std::int64_t num_classes)
    : shape(std::move(input_shape)), classes(num_classes) {
  if (shape.size() != 3) throw InvalidArgument("LinearProbe input shape must be {C,H,W}");
  reset();
}

void LinearProbeImpl::reset() {
  linear = register_module("linear", nn::Linear(shape[0] * shape[1] * shape[2], classes));
}

torch::Tensor LinearProbeImpl::stage(int index, const torch::Tensor& x) {
  if (index != 1) throw InvalidArgument("linear probe has a single stage");
  return x;
}

torch::Tensor LinearProbeImpl::classify(const torch::Tensor& features) { return linear->forward(features.flatten(1)); }

std::vector<LayerGroup> LinearProbeImpl::layer_groups() { return {{"linear", {linear.ptr()}, {}, {}}}; }

std::shared_ptr<StagedCnn> LinearProbeImpl::deep_copy() const {
  return std::dynamic_pointer_cast<LinearProbeImpl>(clone());
}

}  // namespace iia
