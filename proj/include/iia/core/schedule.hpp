#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "iia/core/plan.hpp"

namespace iia {

struct BatchRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t size() const { return end - begin; }
};

struct BatchSchedule {
  std::int64_t total = 0;
  std::vector<BatchRange> batches;

  std::vector<std::int64_t> sizes() const;
};

// Splits `total` consecutive items into batches of at most `max_batch`.
BatchSchedule schedule_range(std::int64_t total, std::int64_t max_batch);

// Groups the plan's n^beta grid points into forward/backward mini-batches.
BatchSchedule schedule_batches(const InterpolationPlan& plan, std::int64_t max_batch);

// c_{i,j}: cost of propagating from layer i to layer j (or back). The head
// has index head_index(depth).
using CostTable = std::map<std::pair<int, int>, double>;

inline int head_index(int depth) { return depth + 1; }

// R(IIA_M) = sum_m (n^m / B) c_{i_{m-1}, i_m} + (n^M / B) c_{i_M, K}, with
// i_0 the input and i_1 < ... < i_M the interpolated layers. Division is
// literal (no clamping at one batch).
double estimate_cost(const InterpolationPlan& plan, const CostTable& layer_costs, std::int64_t max_batch);

}  // namespace iia
