#pragma once

#include <string>

#include <torch/torch.h>

namespace iia {

// How the "missing information" reference r^l is derived from u^l.
class ReferencePolicy {
 public:
  enum class Kind { channel_min, zero, custom };

  static ReferencePolicy channel_min() { return ReferencePolicy(Kind::channel_min, {}); }
  static ReferencePolicy zero() { return ReferencePolicy(Kind::zero, {}); }
  // `value` is shaped like one sample of u (no batch dimension) or like u.
  static ReferencePolicy custom(torch::Tensor value) { return ReferencePolicy(Kind::custom, std::move(value)); }

  Kind kind() const { return kind_; }
  std::string name() const;

  // `u` is batch-major; dimension 1 is the channel (or head) axis. The result
  // has u's shape, dtype and device.
  torch::Tensor make(const torch::Tensor& u) const;

 private:
  ReferencePolicy(Kind kind, torch::Tensor value) : kind_(kind), value_(std::move(value)) {}

  Kind kind_;
  torch::Tensor value_;
};

// r + a^b (u - r). With b = false, or a == 1, u is returned unchanged.
torch::Tensor interpolate(const torch::Tensor& u, const torch::Tensor& r, double a, bool active);

// Row-wise variant: `coefficients` holds one a per batch row; rows with a == 1
// reproduce u exactly.
torch::Tensor interpolate_rows(const torch::Tensor& u, const torch::Tensor& r, const torch::Tensor& coefficients);

}  // namespace iia
