#include "iia/models/densenet.hpp"

#include "iia/errors.hpp"

namespace iia {
namespace nn = torch::nn;

DenseLayerImpl::DenseLayerImpl(std::int64_t in, std::int64_t g, std::int64_t bn)
    : in_features(in), growth(g), bn_size(bn) {
  reset();
}

void DenseLayerImpl::reset() {
  norm1 = register_module("norm1", nn::BatchNorm2d(in_features));
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_features, bn_size * growth, 1).bias(false)));
  norm2 = register_module("norm2", nn::BatchNorm2d(bn_size * growth));
  conv2 = register_module("conv2",
                          nn::Conv2d(nn::Conv2dOptions(bn_size * growth, growth, 3).padding(1).bias(false)));
}

torch::Tensor DenseLayerImpl::forward(const torch::Tensor& x) {
  auto bottleneck = conv1(torch::relu(norm1(x)));
  return conv2(torch::relu(norm2(bottleneck)));
}

DenseBlockImpl::DenseBlockImpl(int n, std::int64_t in, std::int64_t g, std::int64_t bn)
    : num_layers(n), in_features(in), growth(g), bn_size(bn) {
  reset();
}

void DenseBlockImpl::reset() {
  dense_layers.clear();
  for (int i = 0; i < num_layers; ++i) {
    dense_layers.push_back(register_module("denselayer" + std::to_string(i + 1),
                                           DenseLayer(in_features + i * growth, growth, bn_size)));
  }
}

torch::Tensor DenseBlockImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> features{x};
  for (auto& layer : dense_layers) features.push_back(layer->forward(torch::cat(features, 1)));
  return torch::cat(features, 1);
}

TransitionImpl::TransitionImpl(std::int64_t in, std::int64_t out) : in_features(in), out_features(out) { reset(); }

void TransitionImpl::reset() {
  norm = register_module("norm", nn::BatchNorm2d(in_features));
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in_features, out_features, 1).bias(false)));
}

torch::Tensor TransitionImpl::forward(const torch::Tensor& x) {
  return torch::avg_pool2d(conv(torch::relu(norm(x))), 2, 2);
}

DenseNetImpl::DenseNetImpl(std::array<int, 4> config, std::int64_t g, std::int64_t init, std::int64_t num_classes)
    : block_config(config), growth(g), init_features(init), classes(num_classes) {
  reset();
}

void DenseNetImpl::reset() {
  std::vector<std::pair<std::string, std::shared_ptr<nn::Module>>> parts;
  parts.emplace_back("conv0", nn::Conv2d(nn::Conv2dOptions(3, init_features, 7).stride(2).padding(3).bias(false)).ptr());
  parts.emplace_back("norm0", nn::BatchNorm2d(init_features).ptr());
  std::int64_t channels = init_features;
  for (int i = 0; i < 4; ++i) {
    const int n = block_config[static_cast<std::size_t>(i)];
    parts.emplace_back("denseblock" + std::to_string(i + 1), DenseBlock(n, channels, growth, 4).ptr());
    channels += n * growth;
    if (i != 3) {
      parts.emplace_back("transition" + std::to_string(i + 1), Transition(channels, channels / 2).ptr());
      channels /= 2;
    }
  }
  parts.emplace_back("norm5", nn::BatchNorm2d(channels).ptr());
  features = register_module("features", nn::ModuleDict(parts));
  classifier = register_module("classifier", nn::Linear(channels, classes));

  torch::NoGradGuard no_grad;
  for (auto& m : modules(/*include_self=*/false)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(conv->weight);
    } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
      nn::init::ones_(bn->weight);
      nn::init::zeros_(bn->bias);
    } else if (auto* linear = m->as<nn::Linear>()) {
      nn::init::zeros_(linear->bias);
    }
  }
}

std::string DenseNetImpl::stage_name(int index) const {
  return index == 1 ? "stem+denseblock1+transition1"
                    : (index == 4 ? "denseblock4+norm5" : "denseblock" + std::to_string(index) + "+transition" +
                                                              std::to_string(index));
}

torch::Tensor DenseNetImpl::stage(int index, const torch::Tensor& x) {
  if (index < 1 || index > 4) throw InvalidArgument("DenseNet stage index out of range");
  auto h = x;
  if (index == 1) {
    h = features["conv0"]->as<nn::Conv2d>()->forward(h);
    h = torch::relu(features["norm0"]->as<nn::BatchNorm2d>()->forward(h));
    h = torch::max_pool2d(h, 3, 2, 1);
  }
  h = features["denseblock" + std::to_string(index)]->as<DenseBlockImpl>()->forward(h);
  if (index < 4) return features["transition" + std::to_string(index)]->as<TransitionImpl>()->forward(h);
  return torch::relu(features["norm5"]->as<nn::BatchNorm2d>()->forward(h));
}

torch::Tensor DenseNetImpl::classify(const torch::Tensor& features_out) {
  return classifier(torch::adaptive_avg_pool2d(features_out, {1, 1}).flatten(1));
}

torch::Tensor DenseNetImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (int s = 1; s <= 4; ++s) h = stage(s, h);
  return classify(h);
}

std::vector<LayerGroup> DenseNetImpl::layer_groups() {
  auto kaiming = [](torch::nn::Module& m) {
    for (auto& sub : m.modules(/*include_self=*/true)) {
      if (auto* conv = sub->as<nn::Conv2d>()) {
        nn::init::kaiming_normal_(conv->weight);
      } else if (auto* bn = sub->as<nn::BatchNorm2d>()) {
        bn->reset_parameters();
      }
    }
  };
  std::vector<LayerGroup> groups;
  groups.push_back({"stem", {features["conv0"], features["norm0"]}, {}, kaiming});
  for (int i = 1; i <= 4; ++i) {
    groups.push_back({"denseblock" + std::to_string(i), {features["denseblock" + std::to_string(i)]}, {}, kaiming});
    if (i < 4) {
      groups.push_back({"transition" + std::to_string(i), {features["transition" + std::to_string(i)]}, {}, kaiming});
    }
  }
  groups.push_back({"norm5", {features["norm5"]}, {}, kaiming});
  groups.push_back({"classifier", {classifier.ptr()}, {}, [](torch::nn::Module& m) {
                      auto* linear = m.as<nn::Linear>();
                      linear->reset_parameters();
                      nn::init::zeros_(linear->bias);
                    }});
  return groups;
}

std::shared_ptr<StagedCnn> DenseNetImpl::deep_copy() const {
  return std::dynamic_pointer_cast<DenseNetImpl>(clone());
}

std::shared_ptr<DenseNetImpl> make_densenet201(std::int64_t num_classes) {
  return std::make_shared<DenseNetImpl>(std::array<int, 4>{6, 12, 48, 32}, 32, 64, num_classes);
}

}  // namespace iia
