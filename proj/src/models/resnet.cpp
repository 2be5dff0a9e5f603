#include "iia/models/resnet.hpp"

#include "iia/errors.hpp"

namespace iia {
namespace nn = torch::nn;

BottleneckImpl::BottleneckImpl(std::int64_t inplanes_, std::int64_t planes_, std::int64_t stride_)
    : inplanes(inplanes_), planes(planes_), stride(stride_) {
  reset();
}

void BottleneckImpl::reset() {
  const std::int64_t out = planes * 4;
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(inplanes, planes, 1).bias(false)));
  bn1 = register_module("bn1", nn::BatchNorm2d(planes));
  conv2 = register_module("conv2",
                          nn::Conv2d(nn::Conv2dOptions(planes, planes, 3).stride(stride).padding(1).bias(false)));
  bn2 = register_module("bn2", nn::BatchNorm2d(planes));
  conv3 = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(planes, out, 1).bias(false)));
  bn3 = register_module("bn3", nn::BatchNorm2d(out));
  if (stride != 1 || inplanes != out) {
    downsample = register_module(
        "downsample",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(inplanes, out, 1).stride(stride).bias(false)), nn::BatchNorm2d(out)));
  } else {
    downsample = nullptr;
  }
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1(conv1(x)));
  out = torch::relu(bn2(conv2(out)));
  out = bn3(conv3(out));
  auto identity = downsample ? downsample->forward(x) : x;
  return torch::relu(out + identity);
}

ResNetImpl::ResNetImpl(std::array<int, 4> blocks_, std::int64_t num_classes) : blocks(blocks_), classes(num_classes) {
  reset();
}

void ResNetImpl::reset() {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
  bn1 = register_module("bn1", nn::BatchNorm2d(64));
  std::int64_t inplanes = 64;
  const std::array<std::int64_t, 4> planes{64, 128, 256, 512};
  for (int s = 0; s < 4; ++s) {
    nn::Sequential seq;
    for (int b = 0; b < blocks[static_cast<std::size_t>(s)]; ++b) {
      const std::int64_t stride = (b == 0 && s > 0) ? 2 : 1;
      seq->push_back(Bottleneck(inplanes, planes[static_cast<std::size_t>(s)], stride));
      inplanes = planes[static_cast<std::size_t>(s)] * 4;
    }
    layers[static_cast<std::size_t>(s)] = register_module("layer" + std::to_string(s + 1), seq);
  }
  fc = register_module("fc", nn::Linear(inplanes, classes));

  torch::NoGradGuard no_grad;
  for (auto& m : modules(/*include_self=*/false)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
    } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
      nn::init::ones_(bn->weight);
      nn::init::zeros_(bn->bias);
    }
  }
}

torch::Tensor ResNetImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(bn1(conv1(x)));
  h = torch::max_pool2d(h, 3, 2, 1);
  for (auto& layer : layers) h = layer->forward(h);
  h = torch::adaptive_avg_pool2d(h, {1, 1}).flatten(1);
  return fc(h);
}

std::string ResNetImpl::stage_name(int index) const {
  return index == 1 ? "stem+layer1" : "layer" + std::to_string(index);
}

torch::Tensor ResNetImpl::stage(int index, const torch::Tensor& x) {
  if (index < 1 || index > 4) throw InvalidArgument("ResNet stage index out of range");
  if (index == 1) {
    auto h = torch::relu(bn1(conv1(x)));
    h = torch::max_pool2d(h, 3, 2, 1);
    return layers[0]->forward(h);
  }
  return layers[static_cast<std::size_t>(index - 1)]->forward(x);
}

torch::Tensor ResNetImpl::classify(const torch::Tensor& features) {
  return fc(torch::adaptive_avg_pool2d(features, {1, 1}).flatten(1));
}

std::vector<LayerGroup> ResNetImpl::layer_groups() {
  auto kaiming = [](torch::nn::Module& m) {
    for (auto& sub : m.modules(/*include_self=*/true)) {
      if (auto* conv = sub->as<nn::Conv2d>()) {
        nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
      } else if (auto* bn = sub->as<nn::BatchNorm2d>()) {
        bn->reset_parameters();
      }
    }
  };
  std::vector<LayerGroup> groups;
  groups.push_back({"stem", {conv1.ptr(), bn1.ptr()}, {}, kaiming});
  for (int s = 0; s < 4; ++s) {
    auto& seq = layers[static_cast<std::size_t>(s)];
    for (std::size_t b = 0; b < seq->size(); ++b) {
      groups.push_back({"layer" + std::to_string(s + 1) + "." + std::to_string(b), {seq->ptr(b)}, {}, kaiming});
    }
  }
  groups.push_back({"fc", {fc.ptr()}, {}, {}});
  return groups;
}

std::shared_ptr<StagedCnn> ResNetImpl::deep_copy() const {
  return std::dynamic_pointer_cast<ResNetImpl>(clone());
}

std::shared_ptr<ResNetImpl> make_resnet101(std::int64_t num_classes) {
  return std::make_shared<ResNetImpl>(std::array<int, 4>{3, 4, 23, 3}, num_classes);
}

}  // namespace iia
