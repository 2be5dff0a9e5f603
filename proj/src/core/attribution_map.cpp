#include "iia/core/attribution_map.hpp"

#include <cmath>

#include "iia/errors.hpp"

namespace iia {

Grid2D Grid2D::from_tensor(const torch::Tensor& t) {
  if (t.dim() != 2) throw InvalidArgument("Grid2D::from_tensor expects a 2D tensor");
  auto d = t.detach().to(torch::kCPU, torch::kDouble).contiguous();
  Grid2D g(d.size(0), d.size(1));
  std::copy(d.data_ptr<double>(), d.data_ptr<double>() + d.numel(), g.values.begin());
  return g;
}

torch::Tensor Grid2D::to_tensor() const {
  return torch::from_blob(const_cast<double*>(values.data()), {rows, cols}, torch::kDouble).clone();
}

bool AttributionMap::all_finite() const {
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

torch::Tensor AttributionMap::to_tensor() const {
  return torch::from_blob(const_cast<float*>(values.data()), {height, width}, torch::kFloat).clone();
}

AttributionMap AttributionMap::from_grid(const Grid2D& grid, int class_index, std::string method_tag) {
  AttributionMap map;
  map.height = grid.rows;
  map.width = grid.cols;
  map.values.resize(grid.values.size());
  for (std::size_t i = 0; i < grid.values.size(); ++i) map.values[i] = static_cast<float>(grid.values[i]);
  map.class_index = class_index;
  map.method_tag = std::move(method_tag);
  return map;
}

}  // namespace iia
