#include "iia/core/grid.hpp"

#include "iia/errors.hpp"

namespace iia {

std::optional<double> GridPoint::coefficient(int layer, int steps) const {
  if (layer < 0 || layer >= static_cast<int>(k.size()) || k[layer] == 0) return std::nullopt;
  return static_cast<double>(k[layer]) / steps;
}

std::vector<double> GridPoint::active_coefficients(int steps) const {
  std::vector<double> out;
  for (int kj : k) {
    if (kj != 0) out.push_back(static_cast<double>(kj) / steps);
  }
  return out;
}

GridPoint grid_point_at(const InterpolationPlan& plan, std::int64_t index) {
  if (index < 0 || index >= plan.grid_size()) throw InvalidArgument("grid index out of range");
  GridPoint point;
  point.k.assign(plan.interpolate.size(), 0);
  const auto active = plan.active_layers();
  // Highest active layer is the fastest-varying digit.
  for (auto it = active.rbegin(); it != active.rend(); ++it) {
    point.k[*it] = static_cast<int>(index % plan.steps) + 1;
    index /= plan.steps;
  }
  return point;
}

std::vector<GridPoint> enumerate_interpolation_grid(const InterpolationPlan& plan) {
  plan.validate();
  const std::int64_t total = plan.grid_size();
  std::vector<GridPoint> grid;
  grid.reserve(static_cast<std::size_t>(total));
  for (std::int64_t i = 0; i < total; ++i) grid.push_back(grid_point_at(plan, i));
  return grid;
}

}  // namespace iia
