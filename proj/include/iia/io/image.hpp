#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "iia/models/instrumented_model.hpp"

namespace iia {

// Decoded image, uint8 HWC, RGB or single channel.
torch::Tensor read_image(const std::filesystem::path& path);

struct PreprocessOptions {
  std::int64_t resize_short = 256;
  std::int64_t crop = 224;
  std::int64_t channels = 3;
  Normalization normalization = Normalization::imagenet();
};

// Short-side bilinear resize, center crop, scale to [0,1] and per-channel
// normalisation; returns (C,H,W) float. An image already at the crop size is
// only normalised. Grayscale is replicated to three channels when needed.
torch::Tensor preprocess(const torch::Tensor& image_hwc_u8, const PreprocessOptions& options = {});

// Same geometry for a row-major binary mask (nearest neighbour).
std::vector<std::uint8_t> preprocess_mask(const std::vector<std::uint8_t>& mask, std::int64_t height,
                                          std::int64_t width, const PreprocessOptions& options = {});

// Inverse of the normalisation for display, uint8 HWC RGB.
torch::Tensor to_display(const torch::Tensor& image_chw, const Normalization& normalization);

PreprocessOptions preprocess_for(const InstrumentedModel& model);

}  // namespace iia
