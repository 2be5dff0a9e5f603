#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "iia/core/plan.hpp"

namespace iia {

// One point of the nested interpolation grid. `k[j]` is the step index
// (1..n) for an active layer and 0 where the layer is not interpolated.
struct GridPoint {
  std::vector<int> k;

  // a_j = k_j / n, or nullopt for a layer without interpolation.
  std::optional<double> coefficient(int layer, int steps) const;

  // Coefficients of the active layers only, ascending by layer.
  std::vector<double> active_coefficients(int steps) const;
};

// Cartesian product of {1/n, ..., 1} over the plan's active layers, with the
// input layer varying slowest and the highest active layer fastest. A plan
// without active layers yields a single point with no coefficients.
std::vector<GridPoint> enumerate_interpolation_grid(const InterpolationPlan& plan);

// Decodes the flat grid index used by the enumeration order above.
GridPoint grid_point_at(const InterpolationPlan& plan, std::int64_t index);

}  // namespace iia
