#include "iia/models/zoo.hpp"

#include <algorithm>
#include <cstdlib>

#include "iia/errors.hpp"
#include "iia/models/convnext.hpp"
#include "iia/models/densenet.hpp"
#include "iia/models/resnet.hpp"
#include "iia/models/small_cnn.hpp"
#include "iia/models/vit.hpp"
#include "iia/models/weights.hpp"

namespace iia {
namespace {

const std::vector<std::string> kIds = {"resnet101", "densenet201", "convnext_base", "vit_base_patch16",
                                       "vit_small_patch16", "toy_cnn", "toy_vit", "lenet5", "constant"};

SmallCnnConfig toy_cnn_config() {
  SmallCnnConfig c;
  c.in_channels = 3;
  c.height = 32;
  c.width = 32;
  c.stages = {{8, 3, 1, Activation::softplus, true},
              {16, 3, 1, Activation::softplus, true},
              {16, 3, 1, Activation::softplus, false}};
  c.global_pool = true;
  c.num_classes = 10;
  return c;
}

VitConfig toy_vit_config() {
  VitConfig c;
  c.image_size = 32;
  c.patch_size = 8;
  c.embed_dim = 32;
  c.depth = 3;
  c.heads = 2;
  c.num_classes = 10;
  return c;
}

void maybe_load(torch::nn::Module& module, const std::optional<std::filesystem::path>& weights) {
  if (weights) load_state(module, read_safetensors(*weights), /*strict=*/true);
}

template <typename Net>
std::unique_ptr<InstrumentedModel> finish_cnn(const std::string& id, std::shared_ptr<Net> net,
                                              const std::optional<std::filesystem::path>& weights, std::uint64_t seed,
                                              std::vector<std::int64_t> shape, Normalization normalization,
                                              bool calibrate) {
  if (weights) {
    maybe_load(*net, weights);
  } else if (calibrate) {
    calibrate_batchnorm(
        *net,
        [&](const torch::Tensor& x) {
          auto h = x;
          for (int i = 1; i <= net->num_stages(); ++i) h = net->stage(i, h);
          return net->classify(h);
        },
        shape, seed);
  }
  CnnOptions options;
  options.name = id;
  options.input_shape = std::move(shape);
  options.normalization = normalization;
  return instrument_cnn(net, options);
}

}  // namespace

std::vector<std::string> model_ids() { return kIds; }

bool is_known_model(const std::string& id) { return std::find(kIds.begin(), kIds.end(), id) != kIds.end(); }

Architecture model_architecture(const std::string& id) {
  if (!is_known_model(id)) throw InvalidArgument("unknown model '" + id + "'");
  return id.rfind("vit", 0) == 0 || id == "toy_vit" ? Architecture::vit : Architecture::cnn;
}

std::optional<std::filesystem::path> find_weights(const std::string& id, const ModelOptions& options) {
  if (options.weights) {
    if (!std::filesystem::exists(*options.weights)) {
      throw InvalidArgument("weights file " + options.weights->string() + " does not exist");
    }
    return options.weights;
  }
  if (const char* dir = std::getenv("IIA_WEIGHTS_DIR"); dir && *dir) {
    auto candidate = std::filesystem::path(dir) / (id + ".safetensors");
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return std::nullopt;
}

std::unique_ptr<InstrumentedModel> make_model(const std::string& id, const ModelOptions& options) {
  if (!is_known_model(id)) throw InvalidArgument("unknown model '" + id + "'");
  const auto weights = find_weights(id, options);
  torch::manual_seed(options.seed);
  const std::vector<std::int64_t> imagenet_shape{3, 224, 224};

  if (id == "resnet101") {
    return finish_cnn(id, make_resnet101(), weights, options.seed, imagenet_shape, Normalization::imagenet(), true);
  }
  if (id == "densenet201") {
    return finish_cnn(id, make_densenet201(), weights, options.seed, imagenet_shape, Normalization::imagenet(), true);
  }
  if (id == "convnext_base") {
    return finish_cnn(id, make_convnext_base(), weights, options.seed, imagenet_shape, Normalization::imagenet(),
                      false);
  }
  if (id == "toy_cnn") {
    return finish_cnn(id, std::make_shared<SmallCnnImpl>(toy_cnn_config()), weights, options.seed, {3, 32, 32},
                      Normalization::imagenet(), false);
  }
  if (id == "lenet5") {
    return finish_cnn(id, std::make_shared<SmallCnnImpl>(lenet5_config()), weights, options.seed, {1, 28, 28},
                      Normalization::identity(), false);
  }
  if (id == "constant") {
    std::vector<float> logits(10);
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = 0.1f * static_cast<float>(i);
    return finish_cnn(id, std::make_shared<ConstantLogitsImpl>(logits), std::nullopt, options.seed, {3, 224, 224},
                      Normalization::imagenet(), false);
  }

  VitConfig config = id == "vit_base_patch16"    ? vit_base_patch16_config()
                     : id == "vit_small_patch16" ? vit_small_patch16_config()
                                                 : toy_vit_config();
  VisionTransformer net(config);
  maybe_load(*net, weights);
  VitOptions vit_options;
  vit_options.name = id;
  return instrument_vit(net, vit_options);
}

void calibrate_batchnorm(torch::nn::Module& module, const std::function<torch::Tensor(const torch::Tensor&)>& forward,
                         const std::vector<std::int64_t>& input_shape, std::uint64_t seed, int batches,
                         std::int64_t batch_size) {
  std::vector<torch::nn::BatchNorm2dImpl*> norms;
  for (auto& m : module.modules(/*include_self=*/true)) {
    if (auto* bn = m->as<torch::nn::BatchNorm2d>()) norms.push_back(bn);
  }
  if (norms.empty()) return;
  torch::NoGradGuard no_grad;
  for (auto* bn : norms) {
    bn->reset_running_stats();
    bn->options.momentum(std::nullopt);
  }
  const bool was_training = module.is_training();
  module.train(true);
  auto gen = at::detail::createCPUGenerator(seed);
  const auto c = input_shape.at(0), h = input_shape.at(1), w = input_shape.at(2);
  for (int b = 0; b < batches; ++b) {
    // Low-frequency noise resembles normalised natural images better than
    // white noise.
    auto coarse = torch::randn({batch_size, c, std::max<std::int64_t>(h / 8, 1), std::max<std::int64_t>(w / 8, 1)},
                               gen);
    auto x = torch::upsample_bilinear2d(coarse, {h, w}, /*align_corners=*/false) + 0.1 * torch::randn({batch_size, c, h, w}, gen);
    forward(x);
  }
  for (auto* bn : norms) bn->options.momentum(0.1);
  module.train(was_training);
}

}  // namespace iia
