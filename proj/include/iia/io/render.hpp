#pragma once

#include <string>

#include <torch/torch.h>

#include "iia/core/attribution_map.hpp"

namespace iia {

// Min-max normalised map through the JET colormap, encoded as PNG. A
// constant map renders as the low end of the colormap.
std::string render_heatmap(const AttributionMap& map);

// Colormapped map alpha-blended over `image` (uint8 HWC RGB of the map's
// size): out = alpha * heat + (1 - alpha) * image.
std::string render_overlay(const AttributionMap& map, const torch::Tensor& image_hwc_u8, double alpha = 0.5);

// uint8 HWC RGB of the colormapped map, before encoding.
torch::Tensor colorize(const AttributionMap& map);

}  // namespace iia
