#include "iia/core/schedule.hpp"

#include <cmath>
#include <string>

#include "iia/errors.hpp"

namespace iia {

std::vector<std::int64_t> BatchSchedule::sizes() const {
  std::vector<std::int64_t> out;
  out.reserve(batches.size());
  for (const auto& b : batches) out.push_back(b.size());
  return out;
}

BatchSchedule schedule_range(std::int64_t total, std::int64_t max_batch) {
  if (max_batch < 1) throw InvalidArgument("max_batch must be at least 1");
  BatchSchedule schedule;
  schedule.total = total;
  for (std::int64_t begin = 0; begin < total; begin += max_batch) {
    schedule.batches.push_back({begin, std::min(total, begin + max_batch)});
  }
  return schedule;
}

BatchSchedule schedule_batches(const InterpolationPlan& plan, std::int64_t max_batch) {
  plan.validate();
  return schedule_range(plan.grid_size(), max_batch);
}

double estimate_cost(const InterpolationPlan& plan, const CostTable& layer_costs, std::int64_t max_batch) {
  plan.validate();
  if (max_batch < 1) throw InvalidArgument("max_batch must be at least 1");
  auto cost = [&](int from, int to) {
    auto it = layer_costs.find({from, to});
    if (it != layer_costs.end()) return it->second;
    if (from == to) return 0.0;
    throw InvalidArgument("missing cost entry c(" + std::to_string(from) + "," + std::to_string(to) + ")");
  };
  const auto active = plan.active_layers();
  const double n = plan.steps;
  const double batch = static_cast<double>(max_batch);
  double total = 0.0;
  int previous = 0;
  for (std::size_t m = 0; m < active.size(); ++m) {
    total += std::pow(n, static_cast<double>(m + 1)) / batch * cost(previous, active[m]);
    previous = active[m];
  }
  total += std::pow(n, static_cast<double>(active.size())) / batch * cost(previous, head_index(plan.depth()));
  return total;
}

}  // namespace iia
