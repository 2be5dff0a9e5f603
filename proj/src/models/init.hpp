#pragma once

#include <cmath>

#include <torch/torch.h>

namespace iia::detail {

// Normal(mean, std) truncated to [mean - 2 std, mean + 2 std], drawn by
// inverse CDF from the default generator.
inline torch::Tensor trunc_normal_(torch::Tensor t, double mean, double std) {
  torch::NoGradGuard no_grad;
  const double lo = 0.5 * (1.0 + std::erf(-2.0 / std::sqrt(2.0)));
  const double hi = 0.5 * (1.0 + std::erf(2.0 / std::sqrt(2.0)));
  t.uniform_(2.0 * lo - 1.0, 2.0 * hi - 1.0);
  t.erfinv_();
  t.mul_(std * std::sqrt(2.0)).add_(mean);
  return t.clamp_(mean - 2.0 * std, mean + 2.0 * std);
}

}  // namespace iia::detail
