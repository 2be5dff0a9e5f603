#include "iia/models/convnext.hpp"

#include "iia/errors.hpp"
#include "init.hpp"

namespace iia {
namespace nn = torch::nn;

namespace {

void trunc_normal_init(nn::Module& root, bool include_self = true) {
  for (auto& m : root.modules(include_self)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      detail::trunc_normal_(conv->weight, 0.0, 0.02);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* linear = m->as<nn::Linear>()) {
      detail::trunc_normal_(linear->weight, 0.0, 0.02);
      nn::init::zeros_(linear->bias);
    } else if (auto* ln = m->as<nn::LayerNorm>()) {
      ln->reset_parameters();
    } else if (auto* ln2d = m->as<LayerNorm2dImpl>()) {
      nn::init::ones_(ln2d->weight);
      nn::init::zeros_(ln2d->bias);
    } else if (auto* block = m->as<CNBlockImpl>()) {
      block->layer_scale.fill_(block->layer_scale_init);
    }
  }
}

}  // namespace

LayerNorm2dImpl::LayerNorm2dImpl(std::int64_t c, double e) : channels(c), eps(e) { reset(); }

void LayerNorm2dImpl::reset() {
  weight = register_parameter("weight", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor LayerNorm2dImpl::forward(const torch::Tensor& x) {
  auto y = torch::layer_norm(x.permute({0, 2, 3, 1}), {channels}, weight, bias, eps);
  return y.permute({0, 3, 1, 2});
}

CNBlockImpl::CNBlockImpl(std::int64_t d, double ls) : dim(d), layer_scale_init(ls) { reset(); }

void CNBlockImpl::reset() {
  auto to_nhwc = [](const torch::Tensor& x) { return x.permute({0, 2, 3, 1}); };
  auto to_nchw = [](const torch::Tensor& x) { return x.permute({0, 3, 1, 2}); };
  block = register_module(
      "block", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(dim, dim, 7).padding(3).groups(dim)), nn::Functional(to_nhwc),
                              nn::LayerNorm(nn::LayerNormOptions({dim}).eps(1e-6)), nn::Linear(dim, 4 * dim),
                              nn::Functional([](const torch::Tensor& x) { return torch::gelu(x); }),
                              nn::Linear(4 * dim, dim), nn::Functional(to_nchw)));
  layer_scale = register_parameter("layer_scale", torch::full({dim, 1, 1}, layer_scale_init));
}

torch::Tensor CNBlockImpl::forward(const torch::Tensor& x) { return x + layer_scale * block->forward(x); }

ConvNextImpl::ConvNextImpl(std::array<int, 4> depths_, std::array<std::int64_t, 4> dims_, std::int64_t num_classes)
    : depths(depths_), dims(dims_), classes(num_classes) {
  reset();
}

void ConvNextImpl::reset() {
  features = register_module("features", nn::ModuleList());
  for (std::size_t s = 0; s < 4; ++s) {
    if (s == 0) {
      features->push_back(nn::ModuleList(nn::Conv2d(nn::Conv2dOptions(3, dims[0], 4).stride(4)), LayerNorm2d(dims[0])));
    } else {
      features->push_back(
          nn::ModuleList(LayerNorm2d(dims[s - 1]), nn::Conv2d(nn::Conv2dOptions(dims[s - 1], dims[s], 2).stride(2))));
    }
    nn::ModuleList stage_blocks;
    for (int b = 0; b < depths[s]; ++b) stage_blocks->push_back(CNBlock(dims[s]));
    features->push_back(stage_blocks);
  }
  classifier = register_module(
      "classifier", nn::Sequential(LayerNorm2d(dims[3]), nn::Flatten(), nn::Linear(dims[3], classes)));
  torch::NoGradGuard no_grad;
  trunc_normal_init(*this, /*include_self=*/false);
}

std::string ConvNextImpl::stage_name(int index) const {
  return (index == 1 ? "stem+features.1" : "features." + std::to_string(2 * index - 2) + "+features." +
                                               std::to_string(2 * index - 1));
}

torch::Tensor ConvNextImpl::stage(int index, const torch::Tensor& x) {
  if (index < 1 || index > 4) throw InvalidArgument("ConvNeXt stage index out of range");
  const auto i = static_cast<std::size_t>(2 * (index - 1));
  auto h = x;
  for (const auto& m : *features[i]->as<nn::ModuleList>()) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      h = conv->forward(h);
    } else {
      h = m->as<LayerNorm2dImpl>()->forward(h);
    }
  }
  for (const auto& m : *features[i + 1]->as<nn::ModuleList>()) h = m->as<CNBlockImpl>()->forward(h);
  return h;
}

torch::Tensor ConvNextImpl::classify(const torch::Tensor& features_out) {
  return classifier->forward(torch::adaptive_avg_pool2d(features_out, {1, 1}));
}

torch::Tensor ConvNextImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (int s = 1; s <= 4; ++s) h = stage(s, h);
  return classify(h);
}

std::vector<LayerGroup> ConvNextImpl::layer_groups() {
  auto init = [](torch::nn::Module& m) { trunc_normal_init(m); };
  std::vector<LayerGroup> groups;
  for (std::size_t s = 0; s < 4; ++s) {
    groups.push_back({s == 0 ? "stem" : "downsample" + std::to_string(s), {features->ptr(2 * s)}, {}, init});
    auto* stage_blocks = features[2 * s + 1]->as<nn::ModuleList>();
    for (std::size_t b = 0; b < stage_blocks->size(); ++b) {
      groups.push_back({"stage" + std::to_string(s + 1) + "." + std::to_string(b), {stage_blocks->ptr(b)}, {}, init});
    }
  }
  groups.push_back({"classifier", {classifier.ptr()}, {}, init});
  return groups;
}

std::shared_ptr<StagedCnn> ConvNextImpl::deep_copy() const {
  return std::dynamic_pointer_cast<ConvNextImpl>(clone());
}

std::shared_ptr<ConvNextImpl> make_convnext_base(std::int64_t num_classes) {
  return std::make_shared<ConvNextImpl>(std::array<int, 4>{3, 3, 27, 3}, std::array<std::int64_t, 4>{128, 256, 512, 1024},
                                        num_classes);
}

}  // namespace iia
