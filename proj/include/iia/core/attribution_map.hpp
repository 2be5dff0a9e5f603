#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace iia {

// Dense row-major grid of doubles.
struct Grid2D {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> values;

  Grid2D() = default;
  Grid2D(std::int64_t r, std::int64_t c, double fill = 0.0) : rows(r), cols(c), values(static_cast<std::size_t>(r * c), fill) {}

  double& at(std::int64_t r, std::int64_t c) { return values[static_cast<std::size_t>(r * cols + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * cols + c)]; }
  std::int64_t size() const { return rows * cols; }

  static Grid2D from_tensor(const torch::Tensor& t);  // 2D tensor
  torch::Tensor to_tensor() const;                    // kDouble, rows x cols
};

struct AttributionMap {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> values;  // row-major
  int class_index = -1;
  std::string method_tag;
  std::optional<Grid2D> raw_pre_resize;

  float at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * width + c)]; }
  std::int64_t size() const { return height * width; }

  bool all_finite() const;
  torch::Tensor to_tensor() const;  // kFloat, height x width

  static AttributionMap from_grid(const Grid2D& grid, int class_index, std::string method_tag);
};

}  // namespace iia
