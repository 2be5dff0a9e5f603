#include "iia/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "iia/core/reduce.hpp"
#include "iia/core/reference.hpp"
#include "iia/core/schedule.hpp"
#include "iia/errors.hpp"

namespace iia {
namespace {

void check_image(const InstrumentedModel& model, const torch::Tensor& image) {
  if (image.dim() != 3 || image.sizes().vec() != model.input_shape()) {
    throw InvalidArgument("image shape " + c10::str(image.sizes()) + " does not match the model input");
  }
}

torch::Tensor resolve_reference(const torch::Tensor& image, const std::optional<torch::Tensor>& reference) {
  if (!reference) return torch::zeros_like(image);
  if (reference->sizes() != image.sizes()) throw InvalidArgument("IG reference shape differs from the image");
  return reference->to(image.options());
}

double class_score(const InstrumentedModel& model, const torch::Tensor& x, int class_index) {
  torch::NoGradGuard no_grad;
  return model.forward(x.unsqueeze(0))[0][class_index].item<double>();
}

}  // namespace

torch::Tensor integrated_gradients_tensor(const InstrumentedModel& model, const torch::Tensor& image,
                                          const std::optional<torch::Tensor>& reference, int steps, int class_index,
                                          std::int64_t max_batch) {
  check_image(model, image);
  if (steps < 1) throw InvalidArgument("IG needs at least one step");
  if (class_index < 0 || class_index >= model.num_classes()) throw InvalidArgument("class index out of range");
  const auto r = resolve_reference(image, reference);
  const auto x = image.unsqueeze(0);
  const auto r1 = r.unsqueeze(0);
  auto grad_sum = torch::zeros(image.sizes(), torch::TensorOptions().dtype(torch::kDouble));
  for (const auto& range : schedule_range(steps, std::max<std::int64_t>(1, max_batch)).batches) {
    auto k = torch::arange(range.begin + 1, range.end + 1, torch::kDouble);
    auto a = k / static_cast<double>(steps);
    auto path = interpolate_rows(x.expand({range.size(), -1, -1, -1}).contiguous(),
                                 r1.expand({range.size(), -1, -1, -1}).contiguous(), a)
                    .detach()
                    .set_requires_grad(true);
    auto logits = model.forward(path);
    auto score = logits.select(1, class_index).sum();
    if (!score.requires_grad()) continue;  // output independent of the input
    auto grads = torch::autograd::grad({score}, {path}, {}, false, false, /*allow_unused=*/true);
    if (grads.front().defined()) grad_sum += grads.front().detach().to(torch::kDouble).sum(0);
  }
  return (image.to(torch::kDouble) - r.to(torch::kDouble)) * grad_sum / static_cast<double>(steps);
}

AttributionMap integrated_gradients(const InstrumentedModel& model, const torch::Tensor& image,
                                    const std::optional<torch::Tensor>& reference, int steps, int class_index,
                                    std::int64_t max_batch) {
  auto ig = integrated_gradients_tensor(model, image, reference, steps, class_index, max_batch);
  auto raw = Grid2D::from_tensor(ig.mean(0));
  auto map = AttributionMap::from_grid(raw, class_index, "ig n=" + std::to_string(steps));
  map.raw_pre_resize = raw;
  return map;
}

AttributionMap grad_cam(const InstrumentedModel& model, const torch::Tensor& image, int class_index,
                        std::optional<int> layer) {
  if (model.architecture() != Architecture::cnn) {
    throw UnsupportedArchitecture("Grad-CAM needs convolutional activation maps; " + model.name() + " is a ViT");
  }
  check_image(model, image);
  const int l = layer.value_or(model.depth());
  if (l < 1 || l > model.depth()) throw InvalidArgument("Grad-CAM layer must be a tapped stage (1..L)");
  TapSession session(model);
  session.forward_with_injections(image.unsqueeze(0), {}, l);
  auto grad = session.backward_to_injection(class_index, l)[0].to(torch::kDouble);
  auto activation = session.tap(l).u[0].detach().to(torch::kDouble);
  auto alpha = grad.mean({1, 2}, /*keepdim=*/true);
  auto cam = torch::relu((alpha * activation).sum(0));
  auto raw = Grid2D::from_tensor(cam);
  const auto shape = model.input_shape();
  auto map = AttributionMap::from_grid(reduce_to_map(cam, shape[1], shape[2]), class_index, "gradcam");
  map.raw_pre_resize = raw;
  return map;
}

double completeness_check(const InstrumentedModel& model, const torch::Tensor& image,
                          const std::optional<torch::Tensor>& reference, int steps, int class_index) {
  const auto r = resolve_reference(image, reference);
  const double total = integrated_gradients_tensor(model, image, r, steps, class_index).sum().item<double>();
  const double delta = class_score(model, image, class_index) - class_score(model, r, class_index);
  return std::abs(total - delta) / std::max(std::abs(delta), 1e-12);
}

std::vector<torch::Tensor> capture_attentions(const InstrumentedModel& model, const torch::Tensor& image) {
  if (model.architecture() != Architecture::vit) {
    throw UnsupportedArchitecture("attention rollout needs a transformer; " + model.name() + " has no attention");
  }
  check_image(model, image);
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  LayerState state = model.capture_input(image.unsqueeze(0));
  for (int j = 0; j < model.depth(); ++j) {
    state = model.advance(state, state.u);
    out.push_back(state.u[0]);
  }
  return out;
}

AttributionMap attention_rollout_map(const InstrumentedModel& model, const torch::Tensor& image, int class_index,
                                     RolloutCombine combine) {
  RolloutState rs;
  rs.attentions = capture_attentions(model, image);
  auto rollout = attention_rollout(rs, combine);
  const auto grid = model.token_grid();
  auto raw = cls_row_to_patch_map(Grid2D::from_tensor(rollout), grid->rows, grid->cols);
  const auto shape = model.input_shape();
  auto map = AttributionMap::from_grid(reduce_to_map(raw.to_tensor(), shape[1], shape[2]), class_index, "rollout");
  map.raw_pre_resize = raw;
  return map;
}

}  // namespace iia
