#include "iia/core/reference.hpp"

#include "iia/errors.hpp"

namespace iia {

std::string ReferencePolicy::name() const {
  switch (kind_) {
    case Kind::channel_min: return "channel_min";
    case Kind::zero: return "zero";
    case Kind::custom: return "custom";
  }
  return "unknown";
}

torch::Tensor ReferencePolicy::make(const torch::Tensor& u) const {
  switch (kind_) {
    case Kind::zero:
      return torch::zeros_like(u);
    case Kind::channel_min: {
      if (u.dim() < 2) throw InvalidArgument("channel_min reference needs a batch and a channel axis");
      auto flat = u.reshape({u.size(0), u.size(1), -1});
      auto mins = std::get<0>(flat.min(/*dim=*/2, /*keepdim=*/true));
      return mins.expand_as(flat).reshape(u.sizes()).clone();
    }
    case Kind::custom: {
      auto value = value_.to(u.options());
      if (value.sizes() == u.sizes()) return value.clone();
      if (value.dim() + 1 == u.dim() && value.sizes() == u.sizes().slice(1)) {
        return value.unsqueeze(0).expand_as(u).clone();
      }
      throw InvalidArgument("custom reference shape does not match the representation");
    }
  }
  throw InvalidArgument("unknown reference policy");
}

torch::Tensor interpolate(const torch::Tensor& u, const torch::Tensor& r, double a, bool active) {
  if (u.sizes() != r.sizes()) throw InvalidArgument("interpolate: u and r shapes differ");
  if (!active || a == 1.0) return u;
  if (a == 0.0) return r;
  return r + a * (u - r);
}

torch::Tensor interpolate_rows(const torch::Tensor& u, const torch::Tensor& r, const torch::Tensor& coefficients) {
  if (u.sizes() != r.sizes()) throw InvalidArgument("interpolate: u and r shapes differ");
  if (coefficients.dim() != 1 || coefficients.size(0) != u.size(0)) {
    throw InvalidArgument("interpolate: one coefficient per batch row expected");
  }
  std::vector<std::int64_t> shape(static_cast<std::size_t>(u.dim()), 1);
  shape[0] = u.size(0);
  auto a = coefficients.to(u.options()).reshape(shape);
  auto mixed = r + a * (u - r);
  return torch::where(a == 1.0, u, mixed);
}

}  // namespace iia
