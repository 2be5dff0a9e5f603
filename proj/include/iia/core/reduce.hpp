#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "iia/core/attribution_map.hpp"

namespace iia {

// Bilinear resize with half-pixel centres (align-corners off), edge clamped.
Grid2D resize_bilinear(const Grid2D& input, std::int64_t target_h, std::int64_t target_w);

// 3D (C,H,W) input: mean over channels then resize. 2D input: resize only.
Grid2D reduce_to_map(const torch::Tensor& tensor, std::int64_t target_h, std::int64_t target_w);

}  // namespace iia
