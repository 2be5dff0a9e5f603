#pragma once

#include <optional>

#include <torch/torch.h>

#include "iia/core/attribution_map.hpp"
#include "iia/integrands.hpp"
#include "iia/models/instrumented_model.hpp"

namespace iia {

// ((x - r) / n) o sum_{k=1..n} d phi_y / dv at v_k = r + (k/n)(x - r), before
// the channel reduction. `reference` defaults to the zero image. Gradients
// are evaluated in chunks of at most `max_batch` path points.
torch::Tensor integrated_gradients_tensor(const InstrumentedModel& model, const torch::Tensor& image,
                                          const std::optional<torch::Tensor>& reference, int steps, int class_index,
                                          std::int64_t max_batch = 100);

// Channel mean of the above, as a map of the input's size.
AttributionMap integrated_gradients(const InstrumentedModel& model, const torch::Tensor& image,
                                    const std::optional<torch::Tensor>& reference, int steps, int class_index,
                                    std::int64_t max_batch = 100);

// ReLU(sum_c alpha_c A_c) with alpha_c the spatial mean of d f_y / d A_c at
// CNN layer `layer` (default: the last stage), bilinearly resized.
AttributionMap grad_cam(const InstrumentedModel& model, const torch::Tensor& image, int class_index,
                        std::optional<int> layer = std::nullopt);

// |sum IG - (phi_y(x) - phi_y(r))| / max(|phi_y(x) - phi_y(r)|, 1e-12).
double completeness_check(const InstrumentedModel& model, const torch::Tensor& image,
                          const std::optional<torch::Tensor>& reference, int steps, int class_index);

// [CLS] row of the attention rollout over all blocks of a ViT.
AttributionMap attention_rollout_map(const InstrumentedModel& model, const torch::Tensor& image, int class_index,
                                     RolloutCombine combine = RolloutCombine::product);

// Per-block attentions (heads,T,T) of one image, the input of the rollouts.
std::vector<torch::Tensor> capture_attentions(const InstrumentedModel& model, const torch::Tensor& image);

}  // namespace iia
