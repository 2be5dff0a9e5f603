#include "iia/methods.hpp"

#include "iia/baselines.hpp"
#include "iia/errors.hpp"

namespace iia {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::iia2: return "iia2";
    case Method::iia3: return "iia3";
    case Method::img: return "img";
    case Method::act: return "act";
    case Method::iia2_lm1: return "iia2_lm1";
    case Method::ig: return "ig";
    case Method::gradcam: return "gradcam";
    case Method::rollout: return "rollout";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view text) {
  for (auto m : {Method::iia2, Method::iia3, Method::img, Method::act, Method::iia2_lm1, Method::ig, Method::gradcam,
                 Method::rollout}) {
    if (text == to_string(m)) return m;
  }
  return std::nullopt;
}

std::vector<Method> ablation_methods() {
  return {Method::img, Method::act, Method::iia2, Method::iia3, Method::iia2_lm1, Method::ig};
}

bool supports(Method method, Architecture architecture) {
  if (method == Method::gradcam) return architecture == Architecture::cnn;
  if (method == Method::rollout) return architecture == Architecture::vit;
  return true;
}

namespace {

std::optional<Preset> preset_of(Method method) {
  switch (method) {
    case Method::iia2: return Preset::iia2;
    case Method::iia3: return Preset::iia3;
    case Method::img: return Preset::img;
    case Method::act: return Preset::act;
    case Method::iia2_lm1: return Preset::iia2_lm1;
    default: return std::nullopt;
  }
}

}  // namespace

std::optional<InterpolationPlan> method_plan(Method method, const InstrumentedModel& model, int steps,
                                             ClassSelector selector) {
  auto preset = preset_of(method);
  if (!preset) return std::nullopt;
  auto plan = make_preset(*preset, model.depth(), steps);
  plan.class_selector = selector;
  return plan;
}

Integrand method_integrand(const InstrumentedModel& model) {
  return model.architecture() == Architecture::vit ? Integrand::rollout() : Integrand::activation_gradient();
}

AttributionMap explain(const InstrumentedModel& model, const torch::Tensor& image, Method method, int steps,
                       int class_index, const ExecutionOptions& options) {
  if (!supports(method, model.architecture())) {
    throw UnsupportedArchitecture(std::string(to_string(method)) + " is not available for " + model.name());
  }
  if (auto plan = method_plan(method, model, steps)) {
    auto map = iterated_attribution(model, image, *plan, method_integrand(model), {}, class_index, options);
    map.method_tag = std::string(to_string(method)) + " " + map.method_tag;
    return map;
  }
  AttributionMap map;
  switch (method) {
    case Method::ig: map = integrated_gradients(model, image, std::nullopt, steps, class_index, options.max_batch); break;
    case Method::gradcam: map = grad_cam(model, image, class_index); break;
    case Method::rollout: map = attention_rollout_map(model, image, class_index); break;
    default: throw InvalidArgument("unhandled method");
  }
  return map;
}

}  // namespace iia
