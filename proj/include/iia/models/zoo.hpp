#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iia/models/instrumented_model.hpp"

namespace iia {

struct ModelOptions {
  // safetensors file with the architecture's native parameter names. When
  // unset, $IIA_WEIGHTS_DIR/<id>.safetensors is used if present.
  std::optional<std::filesystem::path> weights;
  // Seed for the random initialisation used without weights.
  std::uint64_t seed = 0;
};

// resnet101, densenet201, convnext_base, vit_base_patch16, vit_small_patch16
// plus the small test models toy_cnn, toy_vit, lenet5, constant.
std::vector<std::string> model_ids();
bool is_known_model(const std::string& id);
// Architecture of `id` without building it.
Architecture model_architecture(const std::string& id);

std::optional<std::filesystem::path> find_weights(const std::string& id, const ModelOptions& options);

// Builds and instruments model `id`. Without weights the parameters are
// randomly initialised from `seed` and batch-norm statistics are calibrated
// on smooth noise so activations stay O(1).
std::unique_ptr<InstrumentedModel> make_model(const std::string& id, const ModelOptions& options = {});

// Sets running batch-norm statistics to the average over `batches` random
// smooth inputs of shape {C,H,W}.
void calibrate_batchnorm(torch::nn::Module& module, const std::function<torch::Tensor(const torch::Tensor&)>& forward,
                         const std::vector<std::int64_t>& input_shape, std::uint64_t seed, int batches = 2,
                         std::int64_t batch_size = 8);

}  // namespace iia
