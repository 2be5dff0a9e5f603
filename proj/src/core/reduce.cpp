#include "iia/core/reduce.hpp"

#include <algorithm>
#include <cmath>

#include "iia/errors.hpp"

namespace iia {
namespace {

struct Tap {
  std::int64_t i0;
  std::int64_t i1;
  double lambda;
};

std::vector<Tap> bilinear_taps(std::int64_t in, std::int64_t out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t d = 0; d < out; ++d) {
    double src = std::max(0.0, scale * (static_cast<double>(d) + 0.5) - 0.5);
    auto i0 = std::min(static_cast<std::int64_t>(src), in - 1);
    auto i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(d)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Grid2D resize_bilinear(const Grid2D& input, std::int64_t target_h, std::int64_t target_w) {
  if (input.rows < 1 || input.cols < 1 || target_h < 1 || target_w < 1) {
    throw InvalidArgument("resize_bilinear: empty grid");
  }
  if (input.rows == target_h && input.cols == target_w) return input;
  const auto ry = bilinear_taps(input.rows, target_h);
  const auto rx = bilinear_taps(input.cols, target_w);
  Grid2D out(target_h, target_w);
  for (std::int64_t y = 0; y < target_h; ++y) {
    const auto& ty = ry[static_cast<std::size_t>(y)];
    for (std::int64_t x = 0; x < target_w; ++x) {
      const auto& tx = rx[static_cast<std::size_t>(x)];
      const double top = (1.0 - tx.lambda) * input.at(ty.i0, tx.i0) + tx.lambda * input.at(ty.i0, tx.i1);
      const double bottom = (1.0 - tx.lambda) * input.at(ty.i1, tx.i0) + tx.lambda * input.at(ty.i1, tx.i1);
      out.at(y, x) = (1.0 - ty.lambda) * top + ty.lambda * bottom;
    }
  }
  return out;
}

Grid2D reduce_to_map(const torch::Tensor& tensor, std::int64_t target_h, std::int64_t target_w) {
  torch::Tensor plane;
  if (tensor.dim() == 3) {
    plane = tensor.to(torch::kDouble).mean(0);
  } else if (tensor.dim() == 2) {
    plane = tensor;
  } else {
    throw InvalidArgument("reduce_to_map expects a 2D or 3D tensor");
  }
  return resize_bilinear(Grid2D::from_tensor(plane), target_h, target_w);
}

}  // namespace iia
